// Copyright 2026 The dgmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"

// DGMF v1 (little-endian):
//   "DGMF" | u8 version=1 | u32 n_instances | u32 dim | u32 n_bags
//   n_bags    x (u32 bag_id, u8 bag_label)
//   n_instances x (u32 bag_id, u8 instance_label [255 = unknown], dim x f32)
// CSV: header bag_id,bag_label,instance_label,f0,...,f{d-1}; empty label = unknown.

namespace dgmil {

inline constexpr std::array<char, 4> kDgmfMagic{'D', 'G', 'M', 'F'};
inline constexpr std::uint8_t kDgmfVersion = 1;

static_assert(std::endian::native == std::endian::little, "DGMF I/O assumes a little-endian host");

/// Writes bytes to path.tmp and renames over path, so readers never see a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorKind::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::kIo, "cannot rename into '" + path.string() + "'");
  }
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace detail {

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    if (data_.size() - offset_ < sizeof(T)) {
      fail(ErrorKind::kCorruption, std::string("truncated payload at byte offset ") + std::to_string(offset_) +
                                       " while reading " + what);
    }
    T value;
    std::memcpy(&value, data_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t offset_ = 0;
};

inline InstanceLabel decode_label(std::uint8_t raw, std::size_t instance) {
  switch (raw) {
    case 0: return InstanceLabel::kNegative;
    case 1: return InstanceLabel::kPositive;
    case 255: return InstanceLabel::kUnknown;
    default:
      fail(ErrorKind::kCorruption,
           "instance " + std::to_string(instance) + " has invalid label code " + std::to_string(raw));
  }
}

inline void check_finite_rows(const InstanceSet& instances) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances.features.row(static_cast<Eigen::Index>(i)).allFinite()) {
      fail(ErrorKind::kValidation, "instance " + std::to_string(i) + " has a non-finite feature");
    }
  }
}

}  // namespace detail

inline std::string encode_dgmf(const InstanceSet& instances, const BagTable& bags) {
  ensure_valid(instances, bags, "refusing to write invalid dataset", ErrorKind::kPrecondition);
  std::string out;
  out.reserve(17 + bags.size() * 5 + instances.size() * (5 + 4 * instances.dim()));
  out.append(kDgmfMagic.data(), kDgmfMagic.size());
  detail::put<std::uint8_t>(out, kDgmfVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(instances.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(instances.dim()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(bags.size()));
  for (const Bag& bag : bags.bags) {
    detail::put<std::uint32_t>(out, bag.id);
    detail::put<std::uint8_t>(out, bag.label);
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    detail::put<std::uint32_t>(out, bags.bags[instances.bag_of[i]].id);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(instances.labels[i]));
    for (std::size_t j = 0; j < instances.dim(); ++j) {
      detail::put<float>(out, static_cast<float>(instances.features(static_cast<Eigen::Index>(i),
                                                                    static_cast<Eigen::Index>(j))));
    }
  }
  return out;
}

inline Dataset decode_dgmf(std::string_view bytes) {
  if (bytes.size() < kDgmfMagic.size() + 1 ||
      std::memcmp(bytes.data(), kDgmfMagic.data(), kDgmfMagic.size()) != 0) {
    fail(ErrorKind::kFormat, "missing DGMF magic");
  }
  detail::ByteReader reader(bytes.substr(kDgmfMagic.size()));
  const auto version = reader.get<std::uint8_t>("version");
  if (version != kDgmfVersion) fail(ErrorKind::kFormat, "unsupported DGMF version " + std::to_string(version));

  const auto base = kDgmfMagic.size();
  const auto n = reader.get<std::uint32_t>("n_instances");
  const auto dim = reader.get<std::uint32_t>("dim");
  const auto n_bags = reader.get<std::uint32_t>("n_bags");
  if (dim == 0 || n == 0) fail(ErrorKind::kFormat, "header declares an empty dataset");

  std::vector<std::uint32_t> ids(n_bags);
  std::vector<std::uint8_t> bag_labels(n_bags);
  std::map<std::uint32_t, std::size_t> position_of;
  for (std::uint32_t b = 0; b < n_bags; ++b) {
    ids[b] = reader.get<std::uint32_t>("bag table");
    bag_labels[b] = reader.get<std::uint8_t>("bag table");
    if (!position_of.emplace(ids[b], b).second) {
      fail(ErrorKind::kValidation, "bag id " + std::to_string(ids[b]) + " appears twice in the bag table");
    }
  }

  Dataset ds;
  ds.instances.features.resize(n, dim);
  ds.instances.bag_of.resize(n);
  ds.instances.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t record_offset = base + reader.offset();
    const auto bag_id = reader.get<std::uint32_t>("instance record");
    auto it = position_of.find(bag_id);
    if (it == position_of.end()) {
      fail(ErrorKind::kCorruption, "instance " + std::to_string(i) + " at byte offset " +
                                       std::to_string(record_offset) + " names unknown bag id " +
                                       std::to_string(bag_id));
    }
    ds.instances.bag_of[i] = it->second;
    ds.instances.labels[i] = detail::decode_label(reader.get<std::uint8_t>("instance record"), i);
    for (std::uint32_t j = 0; j < dim; ++j) {
      ds.instances.features(i, j) = static_cast<double>(reader.get<float>("instance features"));
    }
  }
  if (!reader.at_end()) {
    fail(ErrorKind::kCorruption, "trailing bytes after byte offset " + std::to_string(base + reader.offset()));
  }
  detail::check_finite_rows(ds.instances);
  ds.bags = make_bag_table(ids, bag_labels, ds.instances.bag_of);
  ensure_valid(ds.instances, ds.bags, "DGMF payload");
  return ds;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
T parse_number(std::string_view cell, std::size_t line_no, const char* column) {
  T value{};
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": cannot parse " + column + " from '" +
                                 std::string(cell) + "'");
  }
  return value;
}

inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::string encode_csv(const InstanceSet& instances, const BagTable& bags) {
  ensure_valid(instances, bags, "refusing to write invalid dataset", ErrorKind::kPrecondition);
  std::string out = "bag_id,bag_label,instance_label";
  for (std::size_t j = 0; j < instances.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Bag& bag = bags.bags[instances.bag_of[i]];
    out += std::to_string(bag.id) + ',' + std::to_string(bag.label) + ',';
    if (instances.labels[i] != InstanceLabel::kUnknown) {
      out += std::to_string(static_cast<int>(instances.labels[i]));
    }
    for (std::size_t j = 0; j < instances.dim(); ++j) {
      out += ',';
      out += detail::format_double(
          instances.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out += '\n';
  }
  return out;
}

/// Bags appear in order of first occurrence; every row of a bag must repeat
/// the same bag label.
inline Dataset decode_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) fail(ErrorKind::kFormat, "empty CSV");
  const auto header = detail::split_csv_line(lines[0]);
  if (header.size() < 4 || header[0] != "bag_id" || header[1] != "bag_label" || header[2] != "instance_label") {
    fail(ErrorKind::kFormat, "CSV header must start with bag_id,bag_label,instance_label,f0");
  }
  const std::size_t dim = header.size() - 3;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[3 + j] != "f" + std::to_string(j)) {
      fail(ErrorKind::kFormat, "CSV header column " + std::to_string(3 + j) + " must be f" + std::to_string(j));
    }
  }
  const std::size_t n = lines.size() - 1;
  if (n == 0) fail(ErrorKind::kFormat, "CSV has a header but no instances");

  Dataset ds;
  ds.instances.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.instances.bag_of.resize(n);
  ds.instances.labels.resize(n);
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> bag_labels;
  std::map<std::uint32_t, std::size_t> position_of;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t line_no = i + 2;
    const auto cells = detail::split_csv_line(lines[i + 1]);
    if (cells.size() != dim + 3) {
      fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                   " cells, expected " + std::to_string(dim + 3));
    }
    const auto bag_id = detail::parse_number<std::uint32_t>(cells[0], line_no, "bag_id");
    const auto bag_label = detail::parse_number<unsigned>(cells[1], line_no, "bag_label");
    auto [it, inserted] = position_of.emplace(bag_id, ids.size());
    if (inserted) {
      ids.push_back(bag_id);
      bag_labels.push_back(static_cast<std::uint8_t>(std::min(bag_label, 255u)));
    } else if (bag_labels[it->second] != bag_label) {
      fail(ErrorKind::kValidation, "line " + std::to_string(line_no) + ": bag " + std::to_string(bag_id) +
                                       " has conflicting bag labels");
    }
    ds.instances.bag_of[i] = it->second;
    if (cells[2].empty()) {
      ds.instances.labels[i] = InstanceLabel::kUnknown;
    } else {
      const auto raw = detail::parse_number<unsigned>(cells[2], line_no, "instance_label");
      if (raw > 1) fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": instance_label must be 0, 1 or empty");
      ds.instances.labels[i] = static_cast<InstanceLabel>(raw);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      ds.instances.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::parse_number<double>(cells[3 + j], line_no, "feature");
    }
  }
  detail::check_finite_rows(ds.instances);
  ds.bags = make_bag_table(ids, bag_labels, ds.instances.bag_of);
  ensure_valid(ds.instances, ds.bags, "CSV payload");
  return ds;
}

inline bool is_csv_path(const std::filesystem::path& path) { return path.extension() == ".csv"; }

/// Reads DGMF or CSV; the format is detected from the leading bytes.
inline Dataset read_feature_file(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.empty()) fail(ErrorKind::kFormat, "'" + path.string() + "' is empty");
  try {
    if (bytes.rfind("bag_id", 0) == 0) return decode_csv(bytes);
    return decode_dgmf(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

/// Writes DGMF, or CSV when the path ends in ".csv".
inline void write_feature_file(const InstanceSet& instances, const BagTable& bags, const std::filesystem::path& path) {
  const std::string bytes = is_csv_path(path) ? encode_csv(instances, bags) : encode_dgmf(instances, bags);
  try {
    write_file_atomic(path, bytes);
  } catch (const Error& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.detail());
  }
}

}  // namespace dgmil
