#pragma once

// Binary netpbm IO: P5 (grayscale) and P6 (RGB) with 8-bit samples. The
// reader accepts '#' comments between header tokens and reports malformed
// headers with the byte offset where parsing stopped; the writers always
// emit maxval 255 with a single newline after each header token group.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dntdf/tensor.hpp"

namespace dntdf {

struct PnmImage {
  int width = 0, height = 0, channels = 0;  // channels: 1 (P5) or 3 (P6)
  int maxval = 255;
  std::vector<std::uint8_t> data;  // row-major, interleaved channels
};

namespace detail {

class PnmParser {
 public:
  PnmParser(const std::vector<char>& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  std::size_t pos() const { return pos_; }

  void expect_magic(char& kind) {
    require(buf_.size() >= 2, "netpbm: ", path_, ": file shorter than a magic number (byte 0)");
    require(buf_[0] == 'P' && (buf_[1] == '5' || buf_[1] == '6'),
            "netpbm: ", path_, ": expected magic P5 or P6 at byte 0");
    kind = buf_[1];
    pos_ = 2;
  }

  // Skips whitespace and '#' comments; fails at EOF.
  void skip_separators(const char* what) {
    bool progressed = false;
    while (pos_ < buf_.size()) {
      const char c = buf_[pos_];
      if (c == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
        progressed = true;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
        progressed = true;
      } else {
        break;
      }
    }
    require(progressed, "netpbm: ", path_, ": expected whitespace before ",
            what, " at byte ", pos_);
    require(pos_ < buf_.size(), "netpbm: ", path_,
            ": unexpected end of header looking for ", what, " at byte ",
            pos_);
  }

  int parse_int(const char* what) {
    skip_separators(what);
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < buf_.size() && buf_[pos_] >= '0' && buf_[pos_] <= '9') {
      v = v * 10 + (buf_[pos_] - '0');
      require(v <= 1 << 30, "netpbm: ", path_, ": ", what,
              " out of range at byte ", start);
      ++pos_;
    }
    require(pos_ > start, "netpbm: ", path_, ": malformed ", what,
            " at byte ", start);
    return int(v);
  }

  // Exactly one whitespace byte separates the header from the raster.
  void expect_raster_separator() {
    require(pos_ < buf_.size(), "netpbm: ", path_,
            ": missing raster separator at byte ", pos_);
    const char c = buf_[pos_];
    require(c == ' ' || c == '\t' || c == '\r' || c == '\n',
            "netpbm: ", path_, ": expected whitespace before raster at byte ",
            pos_);
    ++pos_;
  }

  const char* raster(std::size_t need) {
    require(buf_.size() - pos_ >= need, "netpbm: ", path_, ": raster needs ",
            need, " bytes but only ", buf_.size() - pos_,
            " remain at byte ", pos_);
    require(buf_.size() - pos_ == need, "netpbm: ", path_, ": ",
            buf_.size() - pos_ - need, " trailing bytes after raster at byte ",
            pos_ + need);
    return buf_.data() + pos_;
  }

 private:
  const std::vector<char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "netpbm: cannot open '", path, "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  detail::PnmParser p(buf, path);

  char kind = 0;
  p.expect_magic(kind);
  PnmImage img;
  img.channels = kind == '5' ? 1 : 3;
  img.width = p.parse_int("width");
  img.height = p.parse_int("height");
  img.maxval = p.parse_int("maxval");
  require(img.width > 0 && img.height > 0, "netpbm: ", path,
          ": degenerate size ", img.width, "x", img.height);
  require(img.maxval >= 1 && img.maxval <= 255, "netpbm: ", path,
          ": only 8-bit maxval (1..255) is supported, got ", img.maxval);
  p.expect_raster_separator();

  const std::size_t need =
      std::size_t(img.width) * img.height * img.channels;
  const char* raster = p.raster(need);
  img.data.assign(raster, raster + need);
  return img;
}

namespace detail {

inline void write_pnm(const std::string& path, const char* magic, int w,
                      int h, int channels, const std::uint8_t* data) {
  require(w > 0 && h > 0, "netpbm: refusing to write degenerate size ", w,
          "x", h);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), "netpbm: cannot write '", path, "'");
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(data),
            std::streamsize(std::size_t(w) * h * channels));
  require(bool(out), "netpbm: short write to '", path, "'");
}

}  // namespace detail

inline void write_pgm(const std::string& path, int w, int h,
                      const std::uint8_t* data) {
  detail::write_pnm(path, "P5", w, h, 1, data);
}

inline void write_ppm(const std::string& path, int w, int h,
                      const std::uint8_t* data) {
  detail::write_pnm(path, "P6", w, h, 3, data);
}

}  // namespace dntdf
