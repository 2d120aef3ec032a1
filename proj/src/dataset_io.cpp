#include "dsp/dataset_io.hpp"

#include <cmath>

#include "dsp/binary_io.hpp"
#include "dsp/error.hpp"

namespace dsp {

DatasetWriter::DatasetWriter(const std::string& path) : os_(path, std::ios::binary), path_(path) {
  if (!os_) throw DataError("cannot write dataset '" + path + "'");
  bin::put_magic(os_, "DSPD");
  bin::put<std::uint32_t>(os_, 1);
}

void DatasetWriter::write(const Frame& f) {
  bin::put<double>(os_, f.timestamp);
  for (int a = 0; a < 3; ++a) bin::put<float>(os_, static_cast<float>(f.pose.position[a]));
  const auto& q = f.pose.orientation;
  bin::put<float>(os_, static_cast<float>(q.w()));
  bin::put<float>(os_, static_cast<float>(q.x()));
  bin::put<float>(os_, static_cast<float>(q.y()));
  bin::put<float>(os_, static_cast<float>(q.z()));
  bin::put<std::uint32_t>(os_, static_cast<std::uint32_t>(f.points.size()));
  for (const auto& p : f.points)
    for (int a = 0; a < 3; ++a) bin::put<float>(os_, p[a]);
  if (!os_) throw DataError("failed writing dataset '" + path_ + "'");
  ++frames_;
}

DatasetReader::DatasetReader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
  if (!is_) throw DataError("cannot open dataset '" + path + "'");
  bin::expect_magic(is_, "DSPD", path);
  std::uint32_t version = 0;
  if (!bin::try_get(is_, version)) throw DataError(path + ": truncated header");
  if (version != 1) throw DataError(path + ": unsupported dataset version " + std::to_string(version));
}

std::optional<Frame> DatasetReader::next() {
  double ts;
  is_.read(reinterpret_cast<char*>(&ts), sizeof ts);
  if (is_.gcount() == 0 && is_.eof()) return std::nullopt;
  const std::string where = path_ + ": frame " + std::to_string(index_);
  if (is_.gcount() != sizeof ts) throw DataError(where + ": truncated timestamp");
  try {
    Frame f;
    f.timestamp = ts;
    float buf[7];
    for (float& b : buf) b = bin::get<float>(is_, "pose");
    f.pose.position = Eigen::Vector3d(buf[0], buf[1], buf[2]);
    Eigen::Quaterniond q(buf[3], buf[4], buf[5], buf[6]);
    double n = q.norm();
    if (!(std::abs(n - 1.0) < 1e-3)) throw DataError("quaternion is not unit length");
    q.normalize();
    f.pose.orientation = q;
    auto count = bin::get<std::uint32_t>(is_, "point count");
    if (count > 0x7fffffffu) throw DataError("point count exceeds the format limit");
    f.points.resize(count);
    is_.read(reinterpret_cast<char*>(f.points.data()), std::streamsize(std::size_t(count) * 3 * sizeof(float)));
    if (static_cast<std::size_t>(is_.gcount()) != std::size_t(count) * 3 * sizeof(float))
      throw DataError("truncated points");
    ++index_;
    return f;
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
}

std::vector<Frame> read_dataset(const std::string& path) {
  DatasetReader r(path);
  std::vector<Frame> out;
  while (auto f = r.next()) out.push_back(std::move(*f));
  return out;
}

}  // namespace dsp
