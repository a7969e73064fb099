#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "hiwm/common.hpp"
#include "hiwm/geometry.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int x, int y, int ch) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch]; }
    std::uint8_t at(int x, int y, int ch) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

struct RenderConfig {
    int width = 128;
    int height = 128;

    void validate() const {
        if (width < 64 || height < 64) throw Error("invalid_config", "render size must be at least 64x64");
    }
};

namespace palette {
inline constexpr std::array<std::uint8_t, 3> kTable{238, 238, 232};
inline constexpr std::array<std::uint8_t, 3> kTarget{152, 214, 160};
inline constexpr std::array<std::uint8_t, 3> kBlock{112, 128, 150};
inline constexpr std::array<std::uint8_t, 3> kPusher{66, 104, 214};
inline constexpr std::array<std::uint8_t, 3> kDistractor{214, 120, 70};
}  // namespace palette

/// Top view of the workspace: table, target silhouette, distractors, block,
/// pusher (later layers paint over earlier ones). One sample at each pixel
/// centre with flat palette colours, so there is no anti-aliasing and equal
/// states give equal buffers. Image y grows downwards, world y upwards.
inline Image render_scene(const SceneState& s, const WorkspaceBounds& b = {}, const RenderConfig& cfg = {}) {
    cfg.validate();
    Image img(cfg.width, cfg.height, 3);
    const double sx = b.width() / cfg.width, sy = b.height() / cfg.height;
    const double r2 = phys::kPusherRadius * phys::kPusherRadius;
    for (int py = 0; py < cfg.height; ++py) {
        for (int px = 0; px < cfg.width; ++px) {
            const Vec2 w{b.x_min + (px + 0.5) * sx, b.y_max - (py + 0.5) * sy};
            auto c = palette::kTable;
            if (tshape::contains(s.target_pose, w)) c = palette::kTarget;
            for (const auto& d : s.distractors) {
                const Vec2 e = w - d.center;
                if (dot(e, e) <= d.radius * d.radius) c = palette::kDistractor;
            }
            if (tshape::contains(s.t_pose, w)) c = palette::kBlock;
            const Vec2 e = w - s.pusher_pos;
            if (dot(e, e) <= r2) c = palette::kPusher;
            for (int ch = 0; ch < 3; ++ch) img.at(px, py, ch) = c[ch];
        }
    }
    return img;
}

/// 8-bit PNG (RGB or gray).
inline void write_png(const std::filesystem::path& path, const Image& img) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw Error("io_error", "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw Error("io_error", "libpng failed writing " + path.string());
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

}  // namespace hiwm
