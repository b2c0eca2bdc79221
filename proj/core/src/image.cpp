#include "cci/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

#include "cci/error.hpp"
#include "cci/fkt.hpp"

namespace cci::image {

namespace {

struct P6Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  std::string name;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(name + ": P6 " + what + " at byte offset " + std::to_string(pos));
  }

  void skip_space() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos]) != 0) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int number() {
    skip_space();
    if (pos >= bytes.size() || std::isdigit(bytes[pos]) == 0) fail("expected a number");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) != 0) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) fail("number too large");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

Tensor parse_p6(const std::vector<unsigned char>& bytes, const std::string& name) {
  P6Reader r{bytes, 0, name};
  if (bytes.size() < 2 || bytes[0] != 'P') r.fail("bad magic");
  r.pos = 1;
  if (bytes[1] != '6') r.fail("bad magic");
  r.pos = 2;
  const int w = r.number();
  const int h = r.number();
  const int maxval = r.number();
  if (w < 1 || h < 1) r.fail("zero image extent");
  if (maxval < 1 || maxval > 255) r.fail("unsupported maxval " + std::to_string(maxval));
  if (r.pos >= bytes.size() || std::isspace(bytes[r.pos]) == 0) r.fail("missing separator");
  ++r.pos;
  const std::size_t count = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - r.pos < count) {
    r.pos = bytes.size();
    r.fail("truncated pixel data");
  }
  Tensor t({1, 3, h, w});
  const float scale = 1.0f / static_cast<float>(maxval);
  const unsigned char* px = bytes.data() + r.pos;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        t.at(0, c, y, x) = static_cast<float>(*px++) * scale;
      }
    }
  }
  return t;
}

}  // namespace

Tensor load(const std::filesystem::path& path) {
  if (fkt::has_magic(path)) {
    Tensor t = fkt::load(path);
    if (t.n() != 1 || t.c() != 3) {
      throw ParseError(path.string() + ": FKT1 image must be 1 x 3 x H x W, got " + t.shape().str());
    }
    return t;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  return parse_p6(bytes, path.string());
}

void save_p6(const std::filesystem::path& path, const Tensor& image) {
  if (image.n() != 1 || image.c() != 3) {
    throw ConfigError("save_p6: image must be 1 x 3 x H x W, got " + image.shape().str());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.w() << ' ' << image.h() << "\n255\n";
  std::vector<unsigned char> px;
  px.reserve(static_cast<std::size_t>(image.w()) * image.h() * 3);
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        px.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: output extent must be >= 1");
  if (out_h == image.h() && out_w == image.w()) return image;
  Tensor out({image.n(), image.c(), out_h, out_w});
  const double sy = static_cast<double>(image.h()) / out_h;
  const double sx = static_cast<double>(image.w()) / out_w;
  for (int n = 0; n < image.n(); ++n) {
    for (int c = 0; c < image.c(); ++c) {
      const float* src = image.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.h() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.h() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.w() - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, image.w() - 1);
          const double wx = fx - x0;
          const auto at = [&](int yy, int xx) {
            return static_cast<double>(src[static_cast<std::size_t>(yy) * image.w() + xx]);
          };
          const double top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
          const double bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
          dst[static_cast<std::size_t>(y) * out_w + x] = static_cast<float>(top * (1.0 - wy) + bottom * wy);
        }
      }
    }
  }
  return out;
}

Letterbox letterbox_geometry(int src_w, int src_h, int size) {
  if (src_w < 1 || src_h < 1 || size < 1) throw ConfigError("letterbox: extents must be >= 1");
  const double scale = std::min(static_cast<double>(size) / src_w, static_cast<double>(size) / src_h);
  Letterbox g;
  g.src_w = src_w;
  g.src_h = src_h;
  g.size = size;
  g.new_w = std::clamp(static_cast<int>(std::lround(src_w * scale)), 1, size);
  g.new_h = std::clamp(static_cast<int>(std::lround(src_h * scale)), 1, size);
  g.pad_x = (size - g.new_w) / 2;
  g.pad_y = (size - g.new_h) / 2;
  return g;
}

Tensor letterbox(const Tensor& image, const Letterbox& g, float fill) {
  if (image.w() != g.src_w || image.h() != g.src_h) {
    throw ConfigError("letterbox: geometry does not match image " + image.shape().str());
  }
  const Tensor resized = resize_bilinear(image, g.new_h, g.new_w);
  Tensor out({image.n(), image.c(), g.size, g.size}, fill);
  for (int n = 0; n < image.n(); ++n) {
    for (int c = 0; c < image.c(); ++c) {
      for (int y = 0; y < g.new_h; ++y) {
        std::copy_n(resized.plane(n, c) + static_cast<std::size_t>(y) * g.new_w, g.new_w,
                    out.plane(n, c) + static_cast<std::size_t>(y + g.pad_y) * g.size + g.pad_x);
      }
    }
  }
  return out;
}

BoundingBox to_source(const BoundingBox& box, const Letterbox& g) {
  BoundingBox b = box;
  b.cx = static_cast<float>((box.cx * g.size - g.pad_x) / g.new_w);
  b.cy = static_cast<float>((box.cy * g.size - g.pad_y) / g.new_h);
  b.w = static_cast<float>(box.w * g.size / g.new_w);
  b.h = static_cast<float>(box.h * g.size / g.new_h);
  return clamp_unit(b);
}

BoundingBox to_canvas(const BoundingBox& box, const Letterbox& g) {
  BoundingBox b = box;
  b.cx = static_cast<float>((box.cx * g.new_w + g.pad_x) / g.size);
  b.cy = static_cast<float>((box.cy * g.new_h + g.pad_y) / g.size);
  b.w = static_cast<float>(box.w * g.new_w / g.size);
  b.h = static_cast<float>(box.h * g.new_h / g.size);
  return b;
}

}  // namespace cci::image
