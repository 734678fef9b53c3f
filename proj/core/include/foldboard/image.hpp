#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace foldboard {

/// Row-major float raster, 1 or 3 channels. Display images keep values in [0,1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.0f)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    float& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }
    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Per-pixel boolean raster.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h, bool fill = false)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
    bool same_shape(const Mask& o) const { return width == o.width && height == o.height; }
};

Image to_grayscale(const Image& img);

/// 8-bit netpbm IO: P5 for 1 channel, P6 for 3. Format picked from channel count.
void save_image(const Image& img, const std::string& path);
Image load_image(const std::string& path);

/// Threshold a grayscale image at 0.5 into a foreground mask.
Mask image_to_mask(const Image& img, float threshold = 0.5f);

/// Flat binary raster with a 16-byte header: magic "FBRS", then width,
/// height, channels as little-endian uint32, followed by float32 samples
/// row-major, channel-interleaved. Used for flow fields, saliency maps and
/// world-coordinate maps.
void save_raster(const Image& img, const std::string& path);
Image load_raster(const std::string& path);

}  // namespace foldboard
