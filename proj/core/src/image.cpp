#include "foldboard/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "foldboard/serial.hpp"

namespace foldboard {

Image to_grayscale(const Image& img) {
    if (img.channels() == 1) return img;
    Image out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                           0.114f * img.at(x, y, 2);
    return out;
}

namespace {

std::uint8_t to_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

int read_pnm_token(std::istream& in) {
    // netpbm headers allow '#' comments between tokens
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    in >> value;
    return value;
}

}  // namespace

void save_image(const Image& img, const std::string& path) {
    if (img.empty()) throw std::runtime_error("io-empty-image: " + path);
    if (img.channels() != 1 && img.channels() != 3)
        throw std::runtime_error("io-bad-channels: " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << (img.channels() == 1 ? "P5" : "P6") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        std::size_t i = 0;
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) row[i++] = to_u8(img.at(x, y, c));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("io-write-failed: " + path);
}

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6")
        throw std::runtime_error("io-bad-magic: " + path);
    const int channels = (magic == "P5") ? 1 : 3;
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("io-bad-header: " + path);
    in.get();  // single whitespace after maxval
    Image img(w, h, channels);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!in) throw std::runtime_error("io-truncated: " + path);
        std::size_t i = 0;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(x, y, c) = static_cast<float>(row[i++]) / static_cast<float>(maxval);
    }
    return img;
}

Mask image_to_mask(const Image& img, float threshold) {
    const Image gray = to_grayscale(img);
    Mask m(gray.width(), gray.height());
    for (int y = 0; y < gray.height(); ++y)
        for (int x = 0; x < gray.width(); ++x)
            m.set(x, y, gray.at(x, y) >= threshold);
    return m;
}

namespace {
constexpr char kRasterMagic[4] = {'F', 'B', 'R', 'S'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_raster(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out.write(kRasterMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(img.width()));
    put_u32(out, static_cast<std::uint32_t>(img.height()));
    put_u32(out, static_cast<std::uint32_t>(img.channels()));
    out.write(reinterpret_cast<const char*>(img.data().data()),
              static_cast<std::streamsize>(img.data().size() * sizeof(float)));
    if (!out) throw std::runtime_error("io-write-failed: " + path);
}

Image load_raster(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kRasterMagic, 4) != 0)
        throw std::runtime_error("io-bad-magic: " + path);
    const auto w = get_u32(in);
    const auto h = get_u32(in);
    const auto c = get_u32(in);
    if (w == 0 || h == 0 || c == 0 || w > 1u << 16 || h > 1u << 16 || c > 8)
        throw std::runtime_error("io-bad-header: " + path);
    Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    in.read(reinterpret_cast<char*>(img.data().data()),
            static_cast<std::streamsize>(img.data().size() * sizeof(float)));
    if (!in) throw std::runtime_error("io-truncated: " + path);
    return img;
}

void TextModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-open-failed: " + path);
    out << "foldboard-model " << type << " 1\n";
    for (const auto& [name, values] : fields) {
        out << name << " " << values.size();
        for (double v : values) out << " " << fmt_double(v);
        out << "\n";
    }
    out << "end\n";
    if (!out) throw std::runtime_error("io-write-failed: " + path);
}

TextModel TextModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("io-open-failed: " + path);
    TextModel m;
    std::string tag;
    int version = 0;
    in >> tag >> m.type >> version;
    if (tag != "foldboard-model" || version != 1)
        throw std::runtime_error("model-bad-header: " + path);
    std::string name;
    while (in >> name) {
        if (name == "end") return m;
        std::size_t n = 0;
        in >> n;
        std::vector<double> values(n);
        for (auto& v : values) in >> v;
        if (!in) throw std::runtime_error("model-truncated-field: " + name);
        m.fields[name] = std::move(values);
    }
    throw std::runtime_error("model-missing-end: " + path);
}

}  // namespace foldboard
