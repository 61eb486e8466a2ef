#include "vseg/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>

namespace vseg {

GrayImage read_png_gray(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw IoError("png allocation failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw IoError("failed to decode " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);

    std::vector<uint8_t> raw(static_cast<size_t>(h) * w * static_cast<size_t>(channels));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = raw.data() + static_cast<size_t>(y) * w * static_cast<size_t>(channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(f);

    GrayImage out;
    out.h = static_cast<int>(h);
    out.w = static_cast<int>(w);
    out.px.resize(static_cast<size_t>(h) * w);
    if (channels == 1) {
        out.px = std::move(raw);
    } else if (channels == 3) {
        for (size_t i = 0; i < out.px.size(); ++i) {
            const real y = 0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] + 0.114 * raw[3 * i + 2];
            out.px[i] = static_cast<uint8_t>(std::lround(std::min(255.0, std::max(0.0, y))));
        }
    } else {
        throw IoError("unsupported channel count in " + path);
    }
    return out;
}

void write_png_gray(const std::string& path, const GrayImage& img) {
    check(img.h > 0 && img.w > 0 &&
              img.px.size() == static_cast<size_t>(img.h) * static_cast<size_t>(img.w),
          "write_png_gray: inconsistent image");
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot create " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw IoError("png allocation failed for " + path);
    }
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.px.data() + static_cast<size_t>(y) * img.w);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw IoError("failed to encode " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

Tensor normalize_pm1(const GrayImage& img) {
    Tensor t({img.h, img.w});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<real>(img.px[static_cast<size_t>(i)]) / 255.0 * 2.0 - 1.0;
    return t;
}

GrayImage denormalize_pm1(const Tensor& t) {
    check_shape(t.ndim() == 2, "denormalize_pm1: expected [H,W]");
    GrayImage img;
    img.h = t.dim(0);
    img.w = t.dim(1);
    img.px.resize(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const real v = (t[i] + 1.0) / 2.0 * 255.0;
        img.px[static_cast<size_t>(i)] =
            static_cast<uint8_t>(std::lround(std::min(255.0, std::max(0.0, v))));
    }
    return img;
}

Tensor resize_bilinear(const Tensor& img, int th, int tw) {
    check_shape(img.ndim() == 2, "resize_bilinear: expected [H,W]");
    check(th >= 1 && tw >= 1, "resize_bilinear: bad target");
    const int H = img.dim(0), W = img.dim(1);
    Tensor out({th, tw});
    const real sh = static_cast<real>(H) / th;
    const real sw = static_cast<real>(W) / tw;
    for (int i = 0; i < th; ++i) {
        real sy = (static_cast<real>(i) + 0.5) * sh - 0.5;
        sy = std::min(std::max(sy, 0.0), static_cast<real>(H - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, H - 1);
        const real fy = sy - y0;
        for (int j = 0; j < tw; ++j) {
            real sx = (static_cast<real>(j) + 0.5) * sw - 0.5;
            sx = std::min(std::max(sx, 0.0), static_cast<real>(W - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, W - 1);
            const real fx = sx - x0;
            const real a = img[static_cast<int64_t>(y0) * W + x0];
            const real b = img[static_cast<int64_t>(y0) * W + x1];
            const real c = img[static_cast<int64_t>(y1) * W + x0];
            const real d = img[static_cast<int64_t>(y1) * W + x1];
            out[static_cast<int64_t>(i) * tw + j] =
                a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
        }
    }
    return out;
}

Tensor resize_nearest(const Tensor& img, int th, int tw) {
    check_shape(img.ndim() == 2, "resize_nearest: expected [H,W]");
    check(th >= 1 && tw >= 1, "resize_nearest: bad target");
    const int H = img.dim(0), W = img.dim(1);
    Tensor out({th, tw});
    for (int i = 0; i < th; ++i) {
        const int si = std::min(H - 1, static_cast<int>((static_cast<real>(i) + 0.5) * H / th));
        for (int j = 0; j < tw; ++j) {
            const int sj =
                std::min(W - 1, static_cast<int>((static_cast<real>(j) + 0.5) * W / tw));
            out[static_cast<int64_t>(i) * tw + j] = img[static_cast<int64_t>(si) * W + sj];
        }
    }
    return out;
}

}  // namespace vseg
