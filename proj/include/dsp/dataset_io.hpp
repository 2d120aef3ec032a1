#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dsp/frame.hpp"

namespace dsp {

// "DSPD", u32 version = 1, then per frame: f64 timestamp, f32x3 position,
// f32x4 quaternion (w, x, y, z), u32 point count, f32x3 per point (sensor frame)
class DatasetWriter {
 public:
  explicit DatasetWriter(const std::string& path);
  void write(const Frame& f);
  std::size_t frames() const { return frames_; }

 private:
  std::ofstream os_;
  std::string path_;
  std::size_t frames_ = 0;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  // nullopt at a clean end of stream; DataError names the frame index otherwise
  std::optional<Frame> next();
  std::size_t frames_read() const { return index_; }

 private:
  std::ifstream is_;
  std::string path_;
  std::size_t index_ = 0;
};

std::vector<Frame> read_dataset(const std::string& path);

}  // namespace dsp
