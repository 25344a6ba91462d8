#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pintent/error.hpp"
#include "pintent/io.hpp"
#include "pintent/linalg.hpp"

namespace pintent {

enum class Aggregation { weekly, semiweekly };

inline std::string to_string(Aggregation a) { return a == Aggregation::weekly ? "weekly" : "semiweekly"; }

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "weekly") return Aggregation::weekly;
  if (s == "semiweekly") return Aggregation::semiweekly;
  fail(ErrorKind::invalid_argument, "unknown aggregation scheme '" + s + "'");
}

inline std::size_t buckets_per_category(Aggregation a) { return a == Aggregation::weekly ? 1 : 2; }

/// Dense feature matrix with binary labels (1 = buy). One row per session.
struct Dataset {
  Matrix rows;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;
  Aggregation aggregation = Aggregation::weekly;
  std::size_t category_count = 0;
  std::optional<std::uint64_t> seed;  // balancing seed, when balanced

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }

  std::size_t positives() const {
    std::size_t n = 0;
    for (int y : labels) n += (y == 1);
    return n;
  }

  void validate() const {
    require_dims(static_cast<std::size_t>(rows.rows()) == labels.size(), "dataset label count must equal row count");
    require_dims(feature_names.size() == dim(), "dataset feature_names must match column count");
    require_dims(row_ids.empty() || row_ids.size() == labels.size(), "dataset row_ids must match row count");
    for (int y : labels) require(y == 0 || y == 1, "dataset labels must be binary");
    require(rows.allFinite(), "dataset rows must be finite");
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.rows = select_rows(rows, idx);
    out.labels.reserve(idx.size());
    for (auto i : idx) out.labels.push_back(labels[i]);
    if (!row_ids.empty())
      for (auto i : idx) out.row_ids.push_back(row_ids[i]);
    out.feature_names = feature_names;
    out.aggregation = aggregation;
    out.category_count = category_count;
    out.seed = seed;
    return out;
  }

  /// Columns with a single value across all rows (flagged by featurize).
  std::vector<std::string> constant_columns() const {
    std::vector<std::string> out;
    if (rows.rows() == 0) return out;
    for (Eigen::Index c = 0; c < rows.cols(); ++c)
      if ((rows.col(c).array() == rows(0, c)).all()) out.push_back(feature_names[static_cast<std::size_t>(c)]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Persistence. A dataset at path P is two files:
//   P        JSON sidecar {"format": "pintent-dataset", "version": 1, ...}
//   P.bin    binary payload, little-endian:
//              "PIDS" | u32 version | u64 n | u64 d | n*d f64 (row-major) | n u8 labels
// The sidecar records the payload digest so a mismatched pair is rejected.

inline constexpr int kDatasetVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) fail(ErrorKind::parse, "dataset payload is truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline std::string encode_dataset_payload(const Dataset& ds) {
  std::string out = "PIDS";
  detail::put_le<std::uint32_t>(out, kDatasetVersion);
  detail::put_le<std::uint64_t>(out, ds.size());
  detail::put_le<std::uint64_t>(out, ds.dim());
  for (Eigen::Index r = 0; r < ds.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) detail::put_le<double>(out, ds.rows(r, c));
  for (int y : ds.labels) out.push_back(static_cast<char>(y));
  return out;
}

inline void decode_dataset_payload(const std::string& bytes, Dataset& ds) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "PIDS") != 0) fail(ErrorKind::parse, "not a dataset payload");
  std::size_t pos = 4;
  if (detail::get_le<std::uint32_t>(bytes, pos) != kDatasetVersion)
    fail(ErrorKind::schema_version, "unsupported dataset payload version");
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  const auto d = detail::get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() != pos + n * d * sizeof(double) + n) fail(ErrorKind::parse, "dataset payload has wrong length");
  ds.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < ds.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) ds.rows(r, c) = detail::get_le<double>(bytes, pos);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<unsigned char>(bytes[pos++]);
}

inline nlohmann::json dataset_sidecar(const Dataset& ds, const std::string& payload_digest) {
  nlohmann::json j = {{"format", "pintent-dataset"},
                      {"version", kDatasetVersion},
                      {"rows", ds.size()},
                      {"cols", ds.dim()},
                      {"positives", ds.positives()},
                      {"aggregation", to_string(ds.aggregation)},
                      {"category_count", ds.category_count},
                      {"feature_names", ds.feature_names},
                      {"row_ids", ds.row_ids},
                      {"payload_digest", payload_digest}};
  j["seed"] = ds.seed ? nlohmann::json(*ds.seed) : nlohmann::json(nullptr);
  return j;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  const std::string payload = encode_dataset_payload(ds);
  write_file(path + ".bin", payload);
  write_file(path, render_json(dataset_sidecar(ds, fingerprint(payload))));
}

inline Dataset load_dataset(const std::string& path) {
  const auto side = parse_json_file(path);
  check_schema(side, "pintent-dataset", kDatasetVersion);
  const std::string payload = read_file(path + ".bin");
  Dataset ds;
  try {
    if (side.at("payload_digest") != fingerprint(payload))
      fail(ErrorKind::parse, "dataset payload digest does not match sidecar '" + path + "'");
    decode_dataset_payload(payload, ds);
    ds.feature_names = side.at("feature_names").get<std::vector<std::string>>();
    ds.row_ids = side.at("row_ids").get<std::vector<std::string>>();
    ds.aggregation = parse_aggregation(side.at("aggregation").get<std::string>());
    ds.category_count = side.at("category_count").get<std::size_t>();
    if (!side.at("seed").is_null()) ds.seed = side.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed dataset sidecar: ") + e.what());
  }
  ds.validate();
  return ds;
}

}  // namespace pintent
