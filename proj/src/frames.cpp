// SPDX-License-Identifier: Apache-2.0
#include "vp/frames.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "vp/errors.hpp"

namespace vp {

namespace fs = std::filesystem;

Tensor normalize(const Tensor& raw, ClampCounter& counter) {
  Tensor out(raw.shape());
  auto in = raw.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    real v = in[i];
    if (v < 0 || v > 1) {
      ++counter.clamped;
      v = std::clamp(v, real(0), real(1));
    }
    o[i] = 2 * v - 1;
  }
  return out;
}

Tensor normalize(const Tensor& raw) {
  ClampCounter ignored;
  return normalize(raw, ignored);
}

Tensor denormalize(const Tensor& frame) {
  Tensor out(frame.shape());
  auto in = frame.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = (in[i] + 1) / 2;
  return out;
}

namespace {

// Header tokens are separated by whitespace; '#' starts a comment that runs to
// the end of the line.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  long next_number(const char* what) {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_ || pos_ - start > 9) fail(std::string("bad ") + what);
    return std::stol(bytes_.substr(start, pos_ - start));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError(path_.string() + ": malformed pixmap header: " + msg);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError(path.string() + ": malformed pixmap header: expected binary P5 or P6 magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes, path);
  const long width = header.next_number("width");
  const long height = header.next_number("height");
  const long maxval = header.next_number("maxval");
  if (width <= 0 || height <= 0) header.fail("non-positive extent");
  if (maxval <= 0 || maxval > 255) header.fail("only 8-bit pixmaps (maxval 1..255) are supported");
  const std::size_t start = header.raster_start();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  if (bytes.size() - start < count) {
    throw IoError(path.string() + ": truncated payload: expected " + std::to_string(count) + " bytes, found " +
                  std::to_string(bytes.size() - start));
  }
  Tensor out({static_cast<std::size_t>(height), static_cast<std::size_t>(width), channels});
  auto o = out.data();
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<unsigned char>(bytes[start + i]);
    if (v > maxval) throw IoError(path.string() + ": sample exceeds maxval");
    o[i] = static_cast<real>(v) / static_cast<real>(maxval);
  }
  return out;
}

void write_pnm(const fs::path& path, const Tensor& raw) {
  if (raw.rank() != 3 || (raw.dim(2) != 1 && raw.dim(2) != 3)) {
    throw ShapeError("write_pnm: expected H x W x 1 or H x W x 3, got " + shape_str(raw.shape()));
  }
  std::string payload;
  payload.reserve(raw.numel());
  for (real v : raw.data()) {
    const double q = std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
    payload.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out << (raw.dim(2) == 1 ? "P5" : "P6") << '\n' << raw.dim(1) << ' ' << raw.dim(0) << "\n255\n";
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string frame_filename(std::size_t index, std::size_t channels) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%05zu.%s", index, channels == 1 ? "pgm" : "ppm");
  return name;
}

void save_frames(const fs::path& dir, const FrameSequence& sequence) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    write_pnm(dir / frame_filename(i, sequence[i].dim(2)), denormalize(sequence[i]));
  }
}

FrameSequence load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && (ext == ".pgm" || ext == ".ppm")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  for (const auto& f : files) {
    Tensor frame = normalize(read_pnm(f));
    if (!seq.empty() && frame.shape() != seq[0].shape()) {
      throw IoError(f.string() + ": frame extents " + shape_str(frame.shape()) + " differ from " +
                    shape_str(seq[0].shape()));
    }
    seq.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace vp
