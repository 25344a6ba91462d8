#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "pintent/ingest.hpp"
#include "pintent/linalg.hpp"

namespace testing_support {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("pintent_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline pintent::RawEvent event(const std::string& user, const std::string& session, pintent::Millis ts,
                               pintent::EventType type, const std::string& item,
                               std::optional<std::string> category = std::nullopt,
                               std::optional<double> price = std::nullopt,
                               std::optional<std::string> description = std::nullopt) {
  pintent::RawEvent e;
  e.user_id = user;
  e.session_id = session;
  e.timestamp = ts;
  e.type = type;
  e.item_id = item;
  e.category_id = std::move(category);
  e.price = price;
  e.description = std::move(description);
  return e;
}

inline std::string line(const pintent::RawEvent& e) { return pintent::event_to_json(e).dump(); }

/// |a - n| / max(|a|, |n|, floor). Below `floor` the comparison is absolute.
inline constexpr double kRelativeFloor = 1e-4;

inline double relative_error(double analytic, double numeric, double floor = kRelativeFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f with respect to *param.
inline double central_difference(const std::function<double()>& f, double* param, double eps = 1e-5) {
  const double saved = *param;
  *param = saved + eps;
  const double up = f();
  *param = saved - eps;
  const double down = f();
  *param = saved;
  return (up - down) / (2.0 * eps);
}

/// Largest relative error between an analytic gradient matrix and central
/// differences over every entry of `param`.
template <typename M>
double max_gradient_error(const std::function<double()>& f, M& param, const M& analytic, double eps = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < param.size(); ++i)
    worst = std::max(worst, relative_error(analytic.data()[i], central_difference(f, param.data() + i, eps)));
  return worst;
}

}  // namespace testing_support
