#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "nuc/nn.hpp"

using namespace nuc;
using nn::Tensor;

namespace {

Tensor random_tensor(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (float& v : t.v) v = static_cast<float>(rng.normal() * scale);
    return t;
}

// central finite differences of a scalar loss L = sum(dy * f(x)) with fixed dy
template <typename Fwd>
double fd_grad(Fwd&& fwd, std::vector<float>& slot, size_t idx, const Tensor& dy, float h) {
    const float saved = slot[idx];
    slot[idx] = saved + h;
    Tensor yp = fwd();
    slot[idx] = saved - h;
    Tensor ym = fwd();
    slot[idx] = saved;
    double acc = 0.0;
    for (size_t i = 0; i < dy.size(); ++i) acc += double(dy.v[i]) * (yp.v[i] - ym.v[i]);
    return acc / (2.0 * h);
}

void check_close(double analytic, double numeric, double tol) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    CHECK(std::abs(analytic - numeric) / scale < tol);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("conv2d gradcheck (input, weight, bias)") {
    Rng rng(1);
    nn::Conv2d conv(3, 4, 3, 1, rng);
    Tensor x = random_tensor(rng, 2, 3, 6, 5);
    Tensor y = conv.forward(x);
    Tensor dy = random_tensor(rng, y.n, y.c, y.h, y.w);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    Tensor dx = conv.backward(dy);

    auto fwd_x = [&]() { return conv.forward(x); };
    for (size_t idx : {size_t(0), size_t(17), size_t(88), x.size() - 1}) {
        double num = fd_grad(fwd_x, x.v, idx, dy, 1e-2f);
        check_close(dx.v[idx], num, 2e-2);
    }
    for (size_t idx : {size_t(0), size_t(31), conv.weight.w.size() - 1}) {
        double num = fd_grad(fwd_x, conv.weight.w.v, idx, dy, 1e-2f);
        check_close(conv.weight.g.v[idx], num, 2e-2);
    }
    double num_b = fd_grad(fwd_x, conv.bias.w.v, 1, dy, 1e-2f);
    check_close(conv.bias.g.v[1], num_b, 2e-2);
}

TEST_CASE("batchnorm gradcheck, train and eval modes") {
    Rng rng(2);
    for (bool train : {true, false}) {
        nn::BatchNorm2d bn(3);
        for (int i = 0; i < 3; ++i) {
            bn.gamma.w.v[i] = 0.5f + 0.3f * i;
            bn.beta.w.v[i] = 0.1f * i;
            bn.running_mean.v[i] = 0.2f * i;
            bn.running_var.v[i] = 1.0f + 0.4f * i;
        }
        Tensor x = random_tensor(rng, 3, 3, 4, 4);
        nn::BatchNorm2d probe = bn;  // keep running stats fixed for FD
        Tensor y = bn.forward(x, train);
        Tensor dy = random_tensor(rng, y.n, y.c, y.h, y.w);
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        Tensor dx = bn.backward(dy);

        auto fwd = [&]() {
            nn::BatchNorm2d fresh = probe;
            return fresh.forward(x, train);
        };
        for (size_t idx : {size_t(3), size_t(20), x.size() - 2}) {
            double num = fd_grad(fwd, x.v, idx, dy, 1e-2f);
            check_close(dx.v[idx], num, 3e-2);
        }
    }
}

TEST_CASE("linear, pool, upsample, gap gradchecks") {
    Rng rng(3);

    nn::Linear lin(6, 4, rng);
    Tensor x = random_tensor(rng, 3, 6, 1, 1);
    Tensor y = lin.forward(x);
    Tensor dy = random_tensor(rng, 3, 4, 1, 1);
    lin.weight.zero_grad();
    lin.bias.zero_grad();
    Tensor dx = lin.backward(dy);
    auto fwd_lin = [&]() { return lin.forward(x); };
    for (size_t idx : {size_t(0), size_t(7), x.size() - 1})
        check_close(dx.v[idx], fd_grad(fwd_lin, x.v, idx, dy, 1e-2f), 2e-2);
    check_close(lin.weight.g.v[5], fd_grad(fwd_lin, lin.weight.w.v, 5, dy, 1e-2f), 2e-2);

    nn::MaxPool2 pool;
    Tensor px = random_tensor(rng, 2, 2, 4, 4);
    Tensor py = pool.forward(px);
    Tensor pdy = random_tensor(rng, py.n, py.c, py.h, py.w);
    Tensor pdx = pool.backward(pdy);
    auto fwd_pool = [&]() { return pool.forward(px); };
    for (size_t idx : {size_t(1), size_t(9), px.size() - 3})
        check_close(pdx.v[idx], fd_grad(fwd_pool, px.v, idx, pdy, 1e-3f), 3e-2);

    nn::UpsampleNearest2 up;
    Tensor ux = random_tensor(rng, 1, 2, 3, 3);
    Tensor uy = up.forward(ux);
    Tensor udy = random_tensor(rng, uy.n, uy.c, uy.h, uy.w);
    Tensor udx = up.backward(udy);
    auto fwd_up = [&]() { return up.forward(ux); };
    for (size_t idx : {size_t(0), ux.size() - 1})
        check_close(udx.v[idx], fd_grad(fwd_up, ux.v, idx, udy, 1e-2f), 2e-2);

    nn::GlobalAvgPool gap;
    Tensor gx = random_tensor(rng, 2, 3, 4, 4);
    Tensor gy = gap.forward(gx);
    Tensor gdy = random_tensor(rng, 2, 3, 1, 1);
    Tensor gdx = gap.backward(gdy);
    auto fwd_gap = [&]() { return gap.forward(gx); };
    for (size_t idx : {size_t(2), gx.size() - 5})
        check_close(gdx.v[idx], fd_grad(fwd_gap, gx.v, idx, gdy, 1e-2f), 2e-2);
}

TEST_CASE("unet forward/backward shapes and parameter gradients exist") {
    nn::UNetConfig cfg;
    cfg.widths = {8, 12, 16};
    nn::UNet net(cfg, 5);
    Rng rng(6);
    Tensor x = random_tensor(rng, 2, 3, 16, 16, 0.3);
    Tensor logits = net.forward(x, true);
    REQUIRE(logits.n == 2);
    REQUIRE(logits.c == 1);
    REQUIRE(logits.h == 16);
    REQUIRE(logits.w == 16);

    auto params = net.params();
    for (auto* p : params) p->zero_grad();
    Tensor dy = random_tensor(rng, 2, 1, 16, 16);
    net.backward(dy);
    double gnorm = 0.0;
    for (auto* p : params)
        for (float g : p->g.v) gnorm += double(g) * g;
    CHECK(gnorm > 0.0);
}

TEST_CASE("residual unet preset constructs and runs") {
    nn::UNet net(nn::UNetConfig::preset("resunet34-analog"), 1);
    Rng rng(7);
    Tensor x = random_tensor(rng, 1, 3, 16, 16, 0.3);
    Tensor logits = net.forward(x, false);
    CHECK(logits.h == 16);
    for (float v : logits.v) CHECK(std::isfinite(v));
}

TEST_CASE("encoder: block capture gradient matches finite differences through the tail") {
    // capture at the LAST block: the tail (GAP + Linear) is linear in A, so
    // central differences are accurate to float rounding
    nn::EncoderConfig cfg;
    cfg.widths = {4, 8};
    cfg.embedding_dim = 8;
    nn::Encoder enc(cfg, 9);
    Rng rng(10);
    Tensor x = random_tensor(rng, 1, 3, 8, 8, 0.5);

    auto f = enc.forward(x, false);
    Tensor d_emb(1, cfg.embedding_dim, 1, 1, 1.f);  // z = sum(embedding)
    Tensor grad = enc.backward(d_emb, 2);
    const Tensor a = f.block_out[1];
    REQUIRE(grad.same_shape(a));

    Tensor probe = a;
    auto z_of = [&](const Tensor& t) {
        Tensor e = enc.forward_from(2, t);
        double z = 0.0;
        for (float v : e.v) z += v;
        return z;
    };
    const float h = 1e-3f;
    for (size_t idx : {size_t(0), size_t(33), size_t(100), probe.size() - 1}) {
        const float saved = probe.v[idx];
        probe.v[idx] = saved + h;
        double zp = z_of(probe);
        probe.v[idx] = saved - h;
        double zm = z_of(probe);
        probe.v[idx] = saved;
        check_close(grad.v[idx], (zp - zm) / (2 * h), 1e-3);
    }
}

TEST_CASE("checkpoint round-trips encoder and unet bitwise") {
    nn::EncoderConfig cfg;
    cfg.widths = {4, 8};
    cfg.embedding_dim = 8;
    nn::Encoder enc(cfg, 42);
    auto ckpt = nn::Checkpoint::from_encoder(enc, "similarity", "deadbeef", 42, {0.5, 0.25});
    const std::string path = (std::filesystem::temp_directory_path() / "enc_test.ckpt").string();
    nn::save_checkpoint(path, ckpt);
    nn::Checkpoint loaded = nn::load_checkpoint(path);
    CHECK(loaded.task == "similarity");
    CHECK(loaded.config_hash == "deadbeef");
    CHECK(loaded.losses == std::vector<double>{0.5, 0.25});

    nn::Encoder enc2 = loaded.to_encoder();
    auto a = enc.named_tensors();
    auto b = enc2.named_tensors();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->v == b[i].second->v);

    // inference parity on a fixed input
    Rng rng(3);
    Tensor x = random_tensor(rng, 1, 3, 8, 8, 0.3);
    auto f1 = enc.forward(x, false);
    auto f2 = enc2.forward(x, false);
    CHECK(f1.embedding.v == f2.embedding.v);
    std::filesystem::remove(path);
}

TEST_CASE("adam reduces a simple quadratic") {
    nn::Param p;
    p.w = Tensor(4, 1, 1, 1);
    p.g = Tensor(4, 1, 1, 1);
    p.w.v = {1.f, -2.f, 3.f, -4.f};
    nn::Adam opt;
    opt.lr = 0.1;
    std::vector<nn::Param*> params{&p};
    for (int it = 0; it < 300; ++it) {
        for (int i = 0; i < 4; ++i) p.g.v[i] = 2.f * p.w.v[i];
        opt.step(params);
    }
    for (float v : p.w.v) CHECK(std::abs(v) < 1e-2f);
}

TEST_CASE("identical seeds give identical encoders") {
    nn::EncoderConfig cfg;
    nn::Encoder a(cfg, 123), b(cfg, 123), c(cfg, 124);
    auto ta = a.named_tensors(), tb = b.named_tensors(), tc = c.named_tensors();
    bool identical = true, different = false;
    for (size_t i = 0; i < ta.size(); ++i) {
        identical = identical && ta[i].second->v == tb[i].second->v;
        different = different || ta[i].second->v != tc[i].second->v;
    }
    CHECK(identical);
    CHECK(different);
}

}  // TEST_SUITE nn
