#include "nuc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nuc/config.hpp"
#include "nuc/data.hpp"
#include "nuc/detect.hpp"
#include "nuc/io.hpp"
#include "nuc/metrics.hpp"
#include "nuc/plot.hpp"
#include "nuc/pseudo.hpp"
#include "nuc/saliency.hpp"
#include "nuc/segment.hpp"
#include "nuc/ssl.hpp"

namespace nuc::pipeline {

using nlohmann::json;

Stage stage_from_string(const std::string& s) {
    if (s == "synth-data") return Stage::synth_data;
    if (s == "pretrain") return Stage::pretrain;
    if (s == "activate") return Stage::activate;
    if (s == "pseudomask") return Stage::pseudomask;
    if (s == "train-ndn") return Stage::train_ndn;
    if (s == "detect") return Stage::detect;
    if (s == "voronoi") return Stage::voronoi;
    if (s == "train-nsn") return Stage::train_nsn;
    if (s == "segment") return Stage::segment;
    if (s == "evaluate") return Stage::evaluate;
    throw config::ConfigError("unknown stage: " + s);
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::synth_data: return "synth-data";
        case Stage::pretrain: return "pretrain";
        case Stage::activate: return "activate";
        case Stage::pseudomask: return "pseudomask";
        case Stage::train_ndn: return "train-ndn";
        case Stage::detect: return "detect";
        case Stage::voronoi: return "voronoi";
        case Stage::train_nsn: return "train-nsn";
        case Stage::segment: return "segment";
        case Stage::evaluate: return "evaluate";
    }
    return "?";
}

std::vector<Stage> stage_order() {
    return {Stage::synth_data, Stage::pretrain,  Stage::activate, Stage::pseudomask,
            Stage::train_ndn,  Stage::detect,    Stage::voronoi,  Stage::train_nsn,
            Stage::segment,    Stage::evaluate};
}

Pipeline::Pipeline(json cfg, fs::path out_root) : cfg_(std::move(cfg)), out_(std::move(out_root)) {
    seed_ = cfg_["seed"].get<uint32_t>();
}

std::string Pipeline::dataset_hash() const {
    if (cfg_["data"]["profile"] == "synthetic") return stage_hash(Stage::synth_data);
    return config::hash_json(json{{"stage", "external-data"}, {"data", cfg_["data"]}});
}

fs::path Pipeline::dataset_dir() const {
    if (cfg_["data"]["profile"] == "synthetic")
        return stage_dir(Stage::synth_data) / "dataset";
    return fs::path(cfg_["data"]["root"].get<std::string>());
}

std::string Pipeline::stage_hash(Stage stage) const {
    json j;
    j["stage"] = to_string(stage);
    switch (stage) {
        case Stage::synth_data:
            j["data"] = cfg_["data"];
            j["seed"] = seed_;
            break;
        case Stage::pretrain:
            j["ssl"] = cfg_["ssl"];
            j["seed"] = seed_;
            j["up"] = {dataset_hash()};
            break;
        case Stage::activate:
            j["saliency"] = cfg_["saliency"];
            j["up"] = {stage_hash(Stage::pretrain)};
            break;
        case Stage::pseudomask:
            j["pseudo"] = cfg_["pseudo"];
            j["seed"] = seed_;
            j["up"] = {stage_hash(Stage::activate)};
            break;
        case Stage::train_ndn:
            j["train"] = {{"epochs", cfg_["detect"]["epochs"]},
                          {"learning_rate", cfg_["detect"]["learning_rate"]},
                          {"batch_size", cfg_["detect"]["batch_size"]},
                          {"backbone", cfg_["detect"]["backbone"]}};
            j["seed"] = seed_;
            j["up"] = {stage_hash(Stage::pseudomask)};
            break;
        case Stage::detect:
            j["infer"] = {{"t_fg", cfg_["detect"]["t_fg"]},
                          {"t_bg", cfg_["detect"]["t_bg"]},
                          {"peak_radius", cfg_["detect"]["peak_radius"]},
                          {"peak_min_prob", cfg_["detect"]["peak_min_prob"]}};
            j["up"] = {stage_hash(Stage::train_ndn)};
            break;
        case Stage::voronoi:
            j["vor"] = {{"seed_disk_radius", cfg_["detect"]["seed_disk_radius"]}};
            j["up"] = {stage_hash(Stage::detect)};
            break;
        case Stage::train_nsn:
            j["train"] = {{"epochs", cfg_["segment"]["epochs"]},
                          {"learning_rate", cfg_["segment"]["learning_rate"]},
                          {"batch_size", cfg_["segment"]["batch_size"]},
                          {"backbone", cfg_["segment"]["backbone"]},
                          {"lambda", cfg_["segment"]["lambda"]},
                          {"supervision", cfg_["segment"]["supervision"]}};
            j["seed"] = seed_;
            j["up"] = {stage_hash(Stage::voronoi), stage_hash(Stage::detect)};
            break;
        case Stage::segment:
            j["infer"] = {{"threshold", cfg_["segment"]["threshold"]},
                          {"connectivity", cfg_["metrics"]["connectivity"]}};
            j["up"] = {stage_hash(Stage::train_nsn)};
            break;
        case Stage::evaluate:
            j["metrics"] = cfg_["metrics"];
            j["up"] = {stage_hash(Stage::segment), stage_hash(Stage::detect), dataset_hash()};
            break;
    }
    return config::hash_json(j);
}

fs::path Pipeline::stage_dir(Stage stage) const {
    return out_ / to_string(stage) / stage_hash(stage);
}

namespace {

fs::path stage_marker(const fs::path& dir) { return dir / "stage.json"; }

struct SplitData {
    std::vector<std::string> stems;
    std::vector<RasterImage> images;
    std::vector<const data::ManifestEntry*> entries;
};

SplitData load_split(const data::DatasetManifest& manifest, const std::string& split,
                     bool with_images = true) {
    SplitData out;
    for (const auto* e : manifest.split(split)) {
        out.entries.push_back(e);
        out.stems.push_back(e->image_path.stem().string());
        if (with_images) out.images.push_back(io::read_image(e->image_path));
    }
    return out;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses,
                    const std::string& hash) {
    std::ostringstream ss;
    ss << "# cfg:" << hash << "\nepoch,loss\n";
    for (size_t i = 0; i < losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, losses[i]);
        ss << buf;
    }
    io::write_text_atomic(path, ss.str());
}

std::string fmt_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

fs::path Pipeline::require_upstream(Stage stage) const {
    const fs::path dir = stage_dir(stage);
    if (!fs::exists(stage_marker(dir)))
        throw std::runtime_error("missing artifacts of stage '" + to_string(stage) +
                                 "' (expected at " + dir.string() + "); run `nucseg " +
                                 to_string(stage) + "` first");
    return dir;
}

void Pipeline::write_stage_json(Stage stage, const fs::path& dir, double wall_ms) const {
    json j;
    j["stage"] = to_string(stage);
    j["hash"] = stage_hash(stage);
    j["dataset_hash"] = dataset_hash();
    j["seed"] = seed_;
    j["wall_ms"] = wall_ms;
    io::write_text_atomic(stage_marker(dir), j.dump(2) + "\n");
}

StageResult Pipeline::run(Stage stage) {
    const fs::path dir = stage_dir(stage);
    StageResult result{dir, stage_hash(stage), false};
    if (fs::exists(stage_marker(dir))) {
        std::cout << to_string(stage) << ": up-to-date (" << result.hash << "), skipped\n";
        result.skipped = true;
        return result;
    }

    // upstream checks, with the producing stage named in the error
    switch (stage) {
        case Stage::synth_data:
            if (cfg_["data"]["profile"] != "synthetic")
                throw config::ConfigError("synth-data stage requires data.profile=synthetic");
            break;
        case Stage::pretrain:
            if (cfg_["data"]["profile"] == "synthetic") require_upstream(Stage::synth_data);
            else if (!fs::exists(dataset_dir()))
                throw std::runtime_error("dataset root not found: " + dataset_dir().string());
            break;
        case Stage::activate: require_upstream(Stage::pretrain); break;
        case Stage::pseudomask: require_upstream(Stage::activate); break;
        case Stage::train_ndn: require_upstream(Stage::pseudomask); break;
        case Stage::detect: require_upstream(Stage::train_ndn); break;
        case Stage::voronoi: require_upstream(Stage::detect); break;
        case Stage::train_nsn:
            require_upstream(Stage::voronoi);
            require_upstream(Stage::detect);
            break;
        case Stage::segment: require_upstream(Stage::train_nsn); break;
        case Stage::evaluate:
            require_upstream(Stage::segment);
            require_upstream(Stage::detect);
            break;
    }

    if (fs::exists(dir)) fs::remove_all(dir);  // incomplete previous attempt
    fs::create_directories(dir);

    const auto t0 = std::chrono::steady_clock::now();
    switch (stage) {
        case Stage::synth_data: do_synth_data(dir); break;
        case Stage::pretrain: do_pretrain(dir); break;
        case Stage::activate: do_activate(dir); break;
        case Stage::pseudomask: do_pseudomask(dir); break;
        case Stage::train_ndn: do_train_ndn(dir); break;
        case Stage::detect: do_detect(dir); break;
        case Stage::voronoi: do_voronoi(dir); break;
        case Stage::train_nsn: do_train_nsn(dir); break;
        case Stage::segment: do_segment(dir); break;
        case Stage::evaluate: do_evaluate(dir); break;
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_stage_json(stage, dir, wall_ms);
    std::cout << to_string(stage) << ": done (" << result.hash << ", "
              << static_cast<long>(wall_ms) << " ms)\n";
    return result;
}

std::vector<StageResult> Pipeline::run_all() {
    std::vector<StageResult> results;
    for (Stage s : stage_order()) {
        if (s == Stage::synth_data && cfg_["data"]["profile"] != "synthetic") continue;
        results.push_back(run(s));
    }
    return results;
}

// ---- stage bodies ----------------------------------------------------------

void Pipeline::do_synth_data(const fs::path& dir) {
    const json& dc = cfg_["data"]["synth"];
    data::SynthConfig sc;
    sc.image_size = dc["image_size"];
    sc.nuclei_min = dc["nuclei_min"];
    sc.nuclei_max = dc["nuclei_max"];
    sc.radius_min = dc["radius_min"];
    sc.radius_max = dc["radius_max"];
    sc.intensity_contrast = dc["intensity_contrast"];
    sc.overlap_fraction = dc["overlap_fraction"];
    sc.noise_sigma = dc["noise_sigma"];
    sc.seed = seed_;
    data::write_synthetic_dataset(dir / "dataset", sc, dc["count_train"], dc["count_val"],
                                  dc["count_test"]);
}

void Pipeline::do_pretrain(const fs::path& dir) {
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train");
    if (train.images.empty()) throw std::runtime_error("pretrain: empty train split");

    const json& sc = cfg_["ssl"];
    ssl::ProxyTask task;
    task.kind = ssl::proxy_kind_from_string(sc["task"]);
    task.temperature = sc["temperature"];
    task.variance_reg = sc["variance_reg"];
    task.pretrained_path = sc["pretrained_path"];
    task.augment.brightness = sc["augment"]["brightness"];
    task.augment.contrast = sc["augment"]["contrast"];
    task.augment.blur_sigma_max = sc["augment"]["blur_sigma_max"];
    task.augment.hflip = sc["augment"]["hflip"];
    task.augment.vflip = sc["augment"]["vflip"];

    ssl::PretrainConfig pc;
    pc.epochs = sc["epochs"];
    pc.learning_rate = sc["learning_rate"];
    pc.batch_size = sc["batch_size"];
    pc.seed = seed_;

    nn::Checkpoint ckpt = ssl::pretrain(train.images, task,
                                        nn::EncoderConfig::preset(sc["preset"]), pc,
                                        stage_hash(Stage::pretrain));
    nn::save_checkpoint((dir / "encoder.ckpt").string(), ckpt);
    write_loss_csv(dir / "loss.csv", ckpt.losses, stage_hash(Stage::pretrain));
}

void Pipeline::do_activate(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::activate);
    nn::Encoder enc =
        nn::load_checkpoint((require_upstream(Stage::pretrain) / "encoder.ckpt").string())
            .to_encoder();
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train");
    saliency::LayerSelector layer{cfg_["saliency"]["layer"]};
    const auto scalar = saliency::scalar_from_string(cfg_["saliency"]["scalar"]);

    fs::create_directories(dir / "train");
    for (size_t i = 0; i < train.images.size(); ++i) {
        saliency::ActivationMap map =
            saliency::self_activation_map(enc, train.images[i], layer, scalar);
        ProbabilityMap pm(map.height, map.width);
        pm.values = map.normalized_values;
        io::write_map16(dir / "train" / (train.stems[i] + ".pgm"), pm, "cfg:" + hash);
        io::write_image(dir / "train" / (train.stems[i] + "_color.ppm"),
                        saliency::colorize_heatmap(map), "cfg:" + hash);
    }
}

void Pipeline::do_pseudomask(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::pseudomask);
    const fs::path act_dir = require_upstream(Stage::activate);
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train");

    pseudo::PseudoMaskConfig pmc;
    pmc.fusion.beta = cfg_["pseudo"]["beta"];
    pmc.middle = cfg_["pseudo"]["middle_cluster"] == "background"
                     ? pseudo::MiddleClusterRule::background
                     : pseudo::MiddleClusterRule::ignore;
    pmc.kmeans_max_iter = cfg_["pseudo"]["kmeans_max_iter"];
    pmc.kmeans_tol = cfg_["pseudo"]["kmeans_tol"];

    fs::create_directories(dir / "train");
    std::ostringstream manifest_csv;
    manifest_csv << "# cfg:" << hash << "\nimage,mask\n";
    for (size_t i = 0; i < train.images.size(); ++i) {
        ProbabilityMap pm = io::read_map16(act_dir / "train" / (train.stems[i] + ".pgm"));
        saliency::ActivationMap map;
        map.height = pm.height;
        map.width = pm.width;
        map.values = pm.values;
        map.normalized_values = pm.values;
        pmc.kmeans_seed = seed_ * 2654435761u + static_cast<uint32_t>(i) * 97u;
        TriStateMask mask = pseudo::pseudo_mask_from_map(map, train.images[i], pmc);
        const fs::path out = dir / "train" / (train.stems[i] + ".pgm");
        io::write_tristate(out, mask, "cfg:" + hash);
        manifest_csv << train.entries[i]->image_path.string() << "," << out.string() << "\n";
    }
    io::write_text_atomic(dir / "masks.csv", manifest_csv.str());
}

void Pipeline::do_train_ndn(const fs::path& dir) {
    const fs::path pm_dir = require_upstream(Stage::pseudomask);
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train");
    std::vector<TriStateMask> masks;
    for (const std::string& stem : train.stems)
        masks.push_back(io::read_tristate(pm_dir / "train" / (stem + ".pgm")));

    detect::SegTrainConfig tc;
    tc.epochs = cfg_["detect"]["epochs"];
    tc.learning_rate = cfg_["detect"]["learning_rate"];
    tc.batch_size = cfg_["detect"]["batch_size"];
    tc.backbone = cfg_["detect"]["backbone"];
    tc.seed = seed_;

    nn::Checkpoint ckpt = detect::train_ndn(train.images, masks, tc, stage_hash(Stage::train_ndn));
    nn::save_checkpoint((dir / "ndn.ckpt").string(), ckpt);
    write_loss_csv(dir / "loss.csv", ckpt.losses, stage_hash(Stage::train_ndn));
}

void Pipeline::do_detect(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::detect);
    nn::UNet net = nn::load_checkpoint((require_upstream(Stage::train_ndn) / "ndn.ckpt").string())
                       .to_unet();
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    detect::ThresholdConfig th{cfg_["detect"]["t_fg"], cfg_["detect"]["t_bg"]};
    detect::PeakConfig pk{cfg_["detect"]["peak_radius"], cfg_["detect"]["peak_min_prob"]};

    for (const char* split : {"train", "val", "test"}) {
        SplitData sd = load_split(manifest, split);
        if (sd.images.empty()) continue;
        fs::create_directories(dir / split);
        for (size_t i = 0; i < sd.images.size(); ++i) {
            ProbabilityMap prob = detect::predict_probability(net, sd.images[i]);
            io::write_map16(dir / split / (sd.stems[i] + "_prob.pgm"), prob, "cfg:" + hash);
            io::write_tristate(dir / split / (sd.stems[i] + "_trimap.pgm"),
                               detect::threshold_trimap(prob, th), "cfg:" + hash);
            io::write_points_csv(dir / split / (sd.stems[i] + "_points.csv"),
                                 detect::local_maxima(prob, pk), "cfg:" + hash);
        }
    }
}

void Pipeline::do_voronoi(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::voronoi);
    const fs::path det_dir = require_upstream(Stage::detect);
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train", /*with_images=*/false);
    const int disk = cfg_["detect"]["seed_disk_radius"];

    fs::create_directories(dir / "train");
    for (size_t i = 0; i < train.stems.size(); ++i) {
        PointSet pts = io::read_points_csv(det_dir / "train" / (train.stems[i] + "_points.csv"));
        const int h = train.entries[i]->height, w = train.entries[i]->width;
        TriStateMask vor;
        if (pts.empty()) {
            // no detections: no instance-level supervision for this image
            std::cerr << "voronoi: no detected points for " << train.stems[i]
                      << "; emitting all-ignore labels\n";
            vor = TriStateMask(h, w, -1);
        } else {
            vor = detect::voronoi_labels(pts, h, w, disk);
        }
        io::write_tristate(dir / "train" / (train.stems[i] + ".pgm"), vor, "cfg:" + hash);
    }
}

void Pipeline::do_train_nsn(const fs::path& dir) {
    const fs::path vor_dir = require_upstream(Stage::voronoi);
    const fs::path det_dir = require_upstream(Stage::detect);
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData train = load_split(manifest, "train");
    std::vector<TriStateMask> vors, trimaps;
    for (const std::string& stem : train.stems) {
        vors.push_back(io::read_tristate(vor_dir / "train" / (stem + ".pgm")));
        trimaps.push_back(io::read_tristate(det_dir / "train" / (stem + "_trimap.pgm")));
    }

    detect::SegTrainConfig tc;
    tc.epochs = cfg_["segment"]["epochs"];
    tc.learning_rate = cfg_["segment"]["learning_rate"];
    tc.batch_size = cfg_["segment"]["batch_size"];
    tc.backbone = cfg_["segment"]["backbone"];
    tc.seed = seed_;
    segment::JointLossConfig jc;
    jc.lambda_ = cfg_["segment"]["lambda"];
    const auto supervision = cfg_["segment"]["supervision"] == "pixel-only"
                                 ? segment::Supervision::pixel_only
                                 : segment::Supervision::joint;

    nn::Checkpoint ckpt = segment::train_nsn(train.images, vors, trimaps, tc, jc, supervision,
                                             stage_hash(Stage::train_nsn));
    nn::save_checkpoint((dir / "nsn.ckpt").string(), ckpt);
    write_loss_csv(dir / "loss.csv", ckpt.losses, stage_hash(Stage::train_nsn));
}

void Pipeline::do_segment(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::segment);
    nn::UNet net = nn::load_checkpoint((require_upstream(Stage::train_nsn) / "nsn.ckpt").string())
                       .to_unet();
    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData test = load_split(manifest, "test");
    if (test.images.empty()) throw std::runtime_error("segment: empty test split");
    const float threshold = cfg_["segment"]["threshold"];
    const int connectivity = cfg_["metrics"]["connectivity"];

    fs::create_directories(dir / "test");
    for (size_t i = 0; i < test.images.size(); ++i) {
        segment::SegmentationResult res =
            segment::run_segmentation(net, test.images[i], threshold, connectivity);
        io::write_binary_mask(dir / "test" / (test.stems[i] + "_mask.pgm"), res.mask,
                              "cfg:" + hash);
        io::write_instance_map(dir / "test" / (test.stems[i] + "_inst.pgm"), res.instances,
                               "cfg:" + hash);
    }
}

void Pipeline::do_evaluate(const fs::path& dir) {
    const std::string hash = stage_hash(Stage::evaluate);
    const fs::path seg_dir = require_upstream(Stage::segment);
    const fs::path det_dir = require_upstream(Stage::detect);

    // refuse artifacts produced against a different data split
    for (const fs::path& p : {seg_dir, det_dir}) {
        std::ifstream in(stage_marker(p));
        json j = json::parse(in);
        if (j["dataset_hash"] != dataset_hash())
            throw std::runtime_error("evaluate: artifact at " + p.string() +
                                     " was produced for a different data split");
    }

    auto manifest = data::load_manifest(dataset_dir(),
                                        data::profile_from_string(cfg_["data"]["profile"]));
    SplitData test = load_split(manifest, "test", /*with_images=*/false);
    if (test.entries.empty()) throw std::runtime_error("evaluate: empty test split");
    const double radius = cfg_["metrics"]["match_radius"];
    const bool has_masks = !test.entries[0]->mask_path.empty();
    const bool has_points = !test.entries[0]->points_path.empty();

    std::ostringstream rows;
    rows << "# cfg:" << hash << "\n";
    rows << "name,pixel_iou,pixel_f1,object_dice,aji,pred_points,gt_points,det_tp,det_fp,det_fn,"
            "count_abs_err\n";

    long px_tp = 0, px_fp = 0, px_fn = 0;
    std::vector<double> ious, f1s, dices, ajis;
    std::vector<PointSet> pred_sets, gt_sets;

    for (size_t i = 0; i < test.entries.size(); ++i) {
        const std::string& stem = test.stems[i];
        rows << stem;

        if (has_masks) {
            InstanceMap gt = io::read_instance_map(test.entries[i]->mask_path);
            BinaryMask gt_bin(gt.height, gt.width);
            for (size_t k = 0; k < gt.labels.size(); ++k) gt_bin.values[k] = gt.labels[k] > 0;
            BinaryMask pred = io::read_binary_mask(seg_dir / "test" / (stem + "_mask.pgm"));
            InstanceMap pred_inst = io::read_instance_map(seg_dir / "test" / (stem + "_inst.pgm"));

            metrics::PixelScores ps = metrics::pixel_scores(pred, gt_bin);
            px_tp += ps.tp; px_fp += ps.fp; px_fn += ps.fn;
            ious.push_back(ps.iou);
            f1s.push_back(ps.f1);
            const double dice = metrics::object_dice(pred_inst, gt);
            dices.push_back(dice);
            rows << "," << fmt_metric(ps.iou) << "," << fmt_metric(ps.f1) << ","
                 << fmt_metric(dice);
            if (gt.max_id() > 0) {
                const double a = metrics::aji(pred_inst, gt);
                ajis.push_back(a);
                rows << "," << fmt_metric(a);
            } else {
                rows << ",";
            }
        } else {
            rows << ",,,,";
        }

        PointSet pred_pts = io::read_points_csv(det_dir / "test" / (stem + "_points.csv"));
        PointSet gt_pts;
        if (has_points) {
            gt_pts = io::read_points_csv(test.entries[i]->points_path);
        } else if (has_masks) {
            // centroids of ground-truth instances
            InstanceMap gt = io::read_instance_map(test.entries[i]->mask_path);
            std::vector<long> rs(gt.max_id(), 0), cs(gt.max_id(), 0), ns(gt.max_id(), 0);
            for (int r = 0; r < gt.height; ++r)
                for (int c = 0; c < gt.width; ++c)
                    if (gt.at(r, c) > 0) {
                        rs[gt.at(r, c) - 1] += r;
                        cs[gt.at(r, c) - 1] += c;
                        ns[gt.at(r, c) - 1] += 1;
                    }
            for (size_t k = 0; k < ns.size(); ++k)
                if (ns[k])
                    gt_pts.points.push_back({static_cast<int>(rs[k] / ns[k]),
                                             static_cast<int>(cs[k] / ns[k])});
        }
        metrics::PointMatch m = metrics::match_points(pred_pts, gt_pts, radius);
        pred_sets.push_back(pred_pts);
        gt_sets.push_back(gt_pts);
        rows << "," << pred_pts.size() << "," << gt_pts.size() << "," << m.tp << "," << m.fp
             << "," << m.fn << ","
             << std::llabs(static_cast<long long>(pred_pts.size()) -
                           static_cast<long long>(gt_pts.size()))
             << "\n";
    }
    io::write_text_atomic(dir / "results.csv", rows.str());

    metrics::DetectionScores det = metrics::detection_scores(pred_sets, gt_sets, radius);
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / v.size();
    };
    std::ostringstream sum;
    sum << "# cfg:" << hash << "\nmetric,value\n";
    if (has_masks) {
        const long fdenom = 2 * px_tp + px_fp + px_fn;
        const long idenom = px_tp + px_fp + px_fn;
        sum << "pixel_iou_micro," << fmt_metric(idenom ? double(px_tp) / idenom : 0.0) << "\n";
        sum << "pixel_f1_micro," << fmt_metric(fdenom ? 2.0 * px_tp / fdenom : 0.0) << "\n";
        sum << "pixel_iou_macro," << fmt_metric(mean(ious)) << "\n";
        sum << "pixel_f1_macro," << fmt_metric(mean(f1s)) << "\n";
        sum << "object_dice_macro," << fmt_metric(mean(dices)) << "\n";
        sum << "aji_macro," << fmt_metric(mean(ajis)) << "\n";
    }
    sum << "det_precision," << fmt_metric(det.precision) << "\n";
    sum << "det_recall," << fmt_metric(det.recall) << "\n";
    sum << "det_f1," << fmt_metric(det.f1) << "\n";
    sum << "det_mp," << fmt_metric(det.mp) << "\n";
    sum << "match_radius," << fmt_metric(radius) << "\n";
    sum << "n_images," << test.entries.size() << "\n";
    io::write_text_atomic(dir / "summary.csv", sum.str());
}

// ---- sweeps ------------------------------------------------------------------

std::map<std::string, double> read_summary_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open summary: " + path.string());
    std::map<std::string, double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("metric,", 0) == 0) continue;
        const size_t comma = line.find(',');
        if (comma == std::string::npos) continue;
        out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    }
    return out;
}

namespace {

json apply_sweep_value(json cfg, const std::string& parameter, const std::string& value) {
    if (parameter == "beta") cfg["pseudo"]["beta"] = std::stod(value);
    else if (parameter == "lambda") cfg["segment"]["lambda"] = std::stod(value);
    else if (parameter == "layer") cfg["saliency"]["layer"] = std::stoi(value);
    else if (parameter == "proxy-task") cfg["ssl"]["task"] = value;
    else throw config::ConfigError("unknown sweep parameter: " + parameter);
    return cfg;
}

// Macro pixel scores of pseudo masks against ground-truth masks (train split).
std::map<std::string, double> score_pseudomasks(Pipeline& p) {
    auto manifest = data::load_manifest(
        p.dataset_dir(), data::profile_from_string(p.cfg()["data"]["profile"]));
    SplitData train = load_split(manifest, "train", /*with_images=*/false);
    const fs::path pm_dir = p.stage_dir(Stage::pseudomask);
    if (train.entries.empty() || train.entries[0]->mask_path.empty())
        throw std::runtime_error("pseudomask scoring needs ground-truth masks");
    double f1 = 0.0, iou = 0.0;
    for (size_t i = 0; i < train.entries.size(); ++i) {
        TriStateMask mask = io::read_tristate(pm_dir / "train" / (train.stems[i] + ".pgm"));
        InstanceMap gt = io::read_instance_map(train.entries[i]->mask_path);
        BinaryMask pred(mask.height, mask.width), gtb(gt.height, gt.width);
        for (size_t k = 0; k < mask.labels.size(); ++k) pred.values[k] = mask.labels[k] == 1;
        for (size_t k = 0; k < gt.labels.size(); ++k) gtb.values[k] = gt.labels[k] > 0;
        metrics::PixelScores ps = metrics::pixel_scores(pred, gtb);
        f1 += ps.f1;
        iou += ps.iou;
    }
    return {{"pseudo_f1", f1 / train.entries.size()}, {"pseudo_iou", iou / train.entries.size()}};
}

}  // namespace

SweepResult run_sweep(const json& cfg, const fs::path& out_root, const std::string& parameter,
                      const std::vector<std::string>& values, const std::string& eval_at) {
    if (values.empty()) throw config::ConfigError("sweep needs at least one value");
    if (eval_at != "full" && eval_at != "pseudomask")
        throw config::ConfigError("sweep eval_at must be 'full' or 'pseudomask'");

    SweepResult result;
    const std::string sweep_id = config::hash_json(
        json{{"parameter", parameter}, {"values", values}, {"cfg", cfg}, {"eval_at", eval_at}});
    result.dir = out_root / "sweep" / (parameter + "-" + sweep_id);
    fs::create_directories(result.dir);

    for (const std::string& v : values) {
        SweepRow row;
        row.value = v;
        try {
            json vcfg = apply_sweep_value(cfg, parameter, v);
            Pipeline p(vcfg, out_root);
            if (eval_at == "pseudomask") {
                for (Stage s : {Stage::synth_data, Stage::pretrain, Stage::activate,
                                Stage::pseudomask}) {
                    if (s == Stage::synth_data && vcfg["data"]["profile"] != "synthetic") continue;
                    p.run(s);
                }
                row.metrics = score_pseudomasks(p);
            } else {
                p.run_all();
                row.metrics = read_summary_csv(p.stage_dir(Stage::evaluate) / "summary.csv");
            }
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            std::cerr << "sweep value " << v << " failed: " << e.what() << "\n";
        }
        result.rows.push_back(std::move(row));
    }

    // union of metric names across rows
    std::vector<std::string> metric_names;
    for (const auto& row : result.rows)
        for (const auto& [k, _] : row.metrics)
            if (std::find(metric_names.begin(), metric_names.end(), k) == metric_names.end())
                metric_names.push_back(k);

    std::ostringstream csv;
    csv << "parameter,value,ok";
    for (const auto& m : metric_names) csv << "," << m;
    csv << ",error\n";
    for (const auto& row : result.rows) {
        csv << parameter << "," << row.value << "," << (row.ok ? 1 : 0);
        for (const auto& m : metric_names) {
            auto it = row.metrics.find(m);
            csv << "," << (it == row.metrics.end() ? "" : fmt_metric(it->second));
        }
        std::string err = row.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        csv << "," << err << "\n";
    }
    io::write_text_atomic(result.dir / "sweep.csv", csv.str());

    // one chart per headline metric; categorical parameters use the value index
    for (const std::string& m :
         {std::string("pseudo_f1"), std::string("aji_macro"), std::string("pixel_f1_micro"),
          std::string("det_f1"), std::string("det_mp")}) {
        plot::Series series;
        for (size_t i = 0; i < result.rows.size(); ++i) {
            const auto& row = result.rows[i];
            auto it = row.metrics.find(m);
            if (!row.ok || it == row.metrics.end()) continue;
            double x;
            try {
                x = std::stod(row.value);
            } catch (...) {
                x = static_cast<double>(i);
            }
            series.x.push_back(x);
            series.y.push_back(it->second);
        }
        if (series.x.size() >= 2)
            plot::render_line_chart(result.dir / (m + ".ppm"), series);
    }
    return result;
}

}  // namespace nuc::pipeline
