#include "nuc/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace nuc::io {

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint8_t to_u8(float v) {
    v = std::min(1.f, std::max(0.f, v));
    return static_cast<uint8_t>(std::lround(v * 255.f));
}

struct PnmHeader {
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::string& bytes, const fs::path& path) {
    PnmHeader h;
    size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    h.magic = next_token();
    if (h.magic != "P5" && h.magic != "P6")
        throw std::runtime_error("unsupported PNM magic in " + path.string());
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
    ++pos;  // single whitespace after maxval
    h.data_offset = pos;
    if (h.width <= 0 || h.height <= 0)
        throw std::runtime_error("bad PNM dimensions in " + path.string());
    return h;
}

std::string pnm_header(const char* magic, int w, int h, int maxval,
                       const std::string& comment) {
    std::ostringstream ss;
    ss << magic << "\n";
    if (!comment.empty()) ss << "# " << comment << "\n";
    ss << w << " " << h << "\n" << maxval << "\n";
    return ss.str();
}

}  // namespace

void write_image(const fs::path& path, const RasterImage& image,
                 const std::string& comment) {
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("write_image: channels must be 1 or 3");
    std::string bytes = pnm_header(image.channels == 3 ? "P6" : "P5",
                                   image.width, image.height, 255, comment);
    bytes.reserve(bytes.size() + image.size());
    for (float v : image.pixels) bytes.push_back(static_cast<char>(to_u8(v)));
    write_file(path, bytes);
}

RasterImage read_image(const fs::path& path) {
    std::string bytes = read_file(path);
    PnmHeader h = parse_pnm_header(bytes, path);
    if (h.maxval != 255) throw std::runtime_error("expected 8-bit image: " + path.string());
    int channels = h.magic == "P6" ? 3 : 1;
    RasterImage img(h.height, h.width, channels);
    size_t need = static_cast<size_t>(h.width) * h.height * channels;
    if (bytes.size() - h.data_offset < need)
        throw std::runtime_error("truncated image: " + path.string());
    for (size_t i = 0; i < need; ++i)
        img.pixels[i] = static_cast<uint8_t>(bytes[h.data_offset + i]) / 255.f;
    return img;
}

void write_tristate(const fs::path& path, const TriStateMask& mask,
                    const std::string& comment) {
    std::string bytes = pnm_header("P5", mask.width, mask.height, 255, comment);
    for (int8_t v : mask.labels) {
        uint8_t b = v == 1 ? 255 : (v == 0 ? 0 : 128);
        bytes.push_back(static_cast<char>(b));
    }
    write_file(path, bytes);
}

TriStateMask read_tristate(const fs::path& path) {
    std::string bytes = read_file(path);
    PnmHeader h = parse_pnm_header(bytes, path);
    if (h.magic != "P5" || h.maxval != 255)
        throw std::runtime_error("expected 8-bit PGM tri-state mask: " + path.string());
    TriStateMask mask(h.height, h.width);
    for (size_t i = 0; i < mask.labels.size(); ++i) {
        uint8_t b = static_cast<uint8_t>(bytes[h.data_offset + i]);
        if (b == 255) mask.labels[i] = 1;
        else if (b == 0) mask.labels[i] = 0;
        else if (b == 128) mask.labels[i] = -1;
        else throw std::runtime_error("invalid tri-state palette value in " + path.string());
    }
    return mask;
}

void write_instance_map(const fs::path& path, const InstanceMap& map,
                        const std::string& comment) {
    if (map.max_id() > 65535)
        throw std::runtime_error("instance id exceeds 16-bit range: " + path.string());
    std::string bytes = pnm_header("P5", map.width, map.height, 65535, comment);
    for (int32_t v : map.labels) {
        bytes.push_back(static_cast<char>((v >> 8) & 0xff));
        bytes.push_back(static_cast<char>(v & 0xff));
    }
    write_file(path, bytes);
}

InstanceMap read_instance_map(const fs::path& path) {
    std::string bytes = read_file(path);
    PnmHeader h = parse_pnm_header(bytes, path);
    if (h.magic != "P5" || h.maxval != 65535)
        throw std::runtime_error("expected 16-bit PGM instance map: " + path.string());
    InstanceMap map(h.height, h.width);
    for (size_t i = 0; i < map.labels.size(); ++i) {
        uint8_t hi = static_cast<uint8_t>(bytes[h.data_offset + 2 * i]);
        uint8_t lo = static_cast<uint8_t>(bytes[h.data_offset + 2 * i + 1]);
        map.labels[i] = (static_cast<int32_t>(hi) << 8) | lo;
    }
    return map;
}

void write_map16(const fs::path& path, const ProbabilityMap& map,
                 const std::string& comment) {
    std::string bytes = pnm_header("P5", map.width, map.height, 65535, comment);
    for (float v : map.values) {
        float clamped = std::min(1.f, std::max(0.f, v));
        uint16_t q = static_cast<uint16_t>(std::lround(clamped * 65535.f));
        bytes.push_back(static_cast<char>((q >> 8) & 0xff));
        bytes.push_back(static_cast<char>(q & 0xff));
    }
    write_file(path, bytes);
}

ProbabilityMap read_map16(const fs::path& path) {
    std::string bytes = read_file(path);
    PnmHeader h = parse_pnm_header(bytes, path);
    if (h.magic != "P5" || h.maxval != 65535)
        throw std::runtime_error("expected 16-bit PGM map: " + path.string());
    ProbabilityMap map(h.height, h.width);
    for (size_t i = 0; i < map.values.size(); ++i) {
        uint8_t hi = static_cast<uint8_t>(bytes[h.data_offset + 2 * i]);
        uint8_t lo = static_cast<uint8_t>(bytes[h.data_offset + 2 * i + 1]);
        map.values[i] = ((static_cast<int>(hi) << 8) | lo) / 65535.f;
    }
    return map;
}

void write_points_csv(const fs::path& path, const PointSet& points,
                      const std::string& comment) {
    std::ostringstream ss;
    if (!comment.empty()) ss << "# " << comment << "\n";
    ss << "row,col\n";
    for (const Point& p : points.points) ss << p.row << "," << p.col << "\n";
    write_file(path, ss.str());
}

PointSet read_points_csv(const fs::path& path, int max_row, int max_col) {
    std::string bytes = read_file(path);
    std::istringstream in(bytes);
    std::string line;
    int line_no = 0;
    do {
        if (!std::getline(in, line))
            throw std::runtime_error("points CSV missing 'row,col' header: " + path.string());
        ++line_no;
    } while (!line.empty() && line[0] == '#');
    if (line.rfind("row,col", 0) != 0)
        throw std::runtime_error("points CSV missing 'row,col' header: " + path.string());
    PointSet points;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path.string() + ": malformed row at line " +
                                     std::to_string(line_no));
        Point p;
        p.row = std::stoi(line.substr(0, comma));
        p.col = std::stoi(line.substr(comma + 1));
        if (max_row >= 0 && (p.row < 0 || p.row >= max_row || p.col < 0 || p.col >= max_col))
            throw std::runtime_error(path.string() + ": point out of bounds at line " +
                                     std::to_string(line_no));
        points.points.push_back(p);
    }
    return points;
}

void write_binary_mask(const fs::path& path, const BinaryMask& mask,
                       const std::string& comment) {
    std::string bytes = pnm_header("P5", mask.width, mask.height, 255, comment);
    for (uint8_t v : mask.values) bytes.push_back(static_cast<char>(v ? 255 : 0));
    write_file(path, bytes);
}

BinaryMask read_binary_mask(const fs::path& path) {
    std::string bytes = read_file(path);
    PnmHeader h = parse_pnm_header(bytes, path);
    if (h.magic != "P5" || h.maxval != 255)
        throw std::runtime_error("expected 8-bit PGM mask: " + path.string());
    BinaryMask mask(h.height, h.width);
    for (size_t i = 0; i < mask.values.size(); ++i)
        mask.values[i] = static_cast<uint8_t>(bytes[h.data_offset + i]) >= 128 ? 1 : 0;
    return mask;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    write_file(path, content);
}

}  // namespace nuc::io
