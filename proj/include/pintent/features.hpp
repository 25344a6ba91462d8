#pragma once

// Session-level engineered features, category aggregation and dataset assembly.
//
// Every feature of a session is computed from its pageviews (the clicks) and
// from the user's history strictly before that session. Basketview and buy
// events only contribute through prior sessions and the item price catalogue,
// which never includes the session's own events.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pintent/dataset.hpp"
#include "pintent/embedding.hpp"
#include "pintent/ingest.hpp"
#include "pintent/random.hpp"

namespace pintent {

struct SessionFeatures {
  double duration_before_purchase = 0;  // seconds, first to last click
  double click_buy_ratio = 0;
  double median_sessions_before_buy = 0;
  double price = 0;
  double item_duration_total = 0;  // seconds on this session's items over all sessions so far
  double session_dwell = 0;        // seconds, summed click durations in this session
  double hour = 0;
  double n_clicks = 0;
  double avg_purchase_price = 0;
  double views_24h = 0;
  double views_week = 0;
  Vector desc = Vector::Zero(static_cast<Eigen::Index>(kEmbeddingDim));
};

inline constexpr std::array<const char*, 11> kScalarFeatureNames = {
    "duration_before_purchase", "click_buy_ratio", "median_sessions_before_buy", "price",
    "item_duration_total",      "session_dwell",   "hour",                       "n_clicks",
    "avg_purchase_price",       "views_24h",       "views_week"};

inline std::array<double, 11> scalar_values(const SessionFeatures& f) {
  return {f.duration_before_purchase, f.click_buy_ratio, f.median_sessions_before_buy, f.price,
          f.item_duration_total,      f.session_dwell,   f.hour,                       f.n_clicks,
          f.avg_purchase_price,       f.views_24h,       f.views_week};
}

struct FeatureOptions {
  int utc_offset_hours = 0;  // timezone for the hour-of-day feature and week boundaries
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<const RawEvent*> session_clicks(const Session& s) {
  std::vector<const RawEvent*> clicks;
  for (const auto& ev : s.events)
    if (ev.type == EventType::pageview) clicks.push_back(&ev);
  return clicks;
}

/// Seconds spent per item: each click lasts until the next click; the last
/// click gets the median of the others (0 when alone). Item time is the sum
/// over its clicks.
inline std::map<std::string, double> item_durations(const Session& session) {
  const auto clicks = session_clicks(session);
  std::map<std::string, double> out;
  if (clicks.empty()) return out;
  std::vector<double> durations;
  for (std::size_t i = 0; i + 1 < clicks.size(); ++i)
    durations.push_back(static_cast<double>(clicks[i + 1]->timestamp - clicks[i]->timestamp) / 1000.0);
  durations.push_back(median(durations));
  for (std::size_t i = 0; i < clicks.size(); ++i) out[clicks[i]->item_id] += durations[i];
  return out;
}

/// Click-buy ratio of each session, given a user's sessions in chronological
/// order. Item ratio = prior buys / prior clicks (capped at 1, 0 when never
/// clicked before); session value = mean over its distinct clicked items.
inline std::vector<double> click_buy_ratio(const std::vector<const Session*>& user_sessions) {
  std::map<std::string, double> clicks, buys;
  std::vector<double> out;
  out.reserve(user_sessions.size());
  for (const Session* s : user_sessions) {
    std::set<std::string> items;
    for (const auto* c : session_clicks(*s)) items.insert(c->item_id);
    double sum = 0.0;
    for (const auto& item : items) {
      const double c = clicks.count(item) ? clicks[item] : 0.0;
      if (c > 0.0) sum += std::min(1.0, (buys.count(item) ? buys[item] : 0.0) / c);
    }
    out.push_back(items.empty() ? 0.0 : sum / static_cast<double>(items.size()));
    for (const auto& ev : s->events) {
      if (ev.type == EventType::pageview) clicks[ev.item_id] += 1.0;
      if (ev.type == EventType::buy) buys[ev.item_id] += 1.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calendar helpers (ISO weeks start on Monday).

inline Millis local_time(Millis ts, int utc_offset_hours) { return ts + utc_offset_hours * kMillisPerHour; }

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

/// 0 = Monday ... 6 = Sunday. 1970-01-01 was a Thursday.
inline int weekday(Millis local) { return static_cast<int>(((floor_div(local, kMillisPerDay) + 3) % 7 + 7) % 7); }

inline Millis week_start(Millis local) {
  const std::int64_t day = floor_div(local, kMillisPerDay);
  return (day - weekday(local)) * kMillisPerDay;
}

/// Semi-week bucket: Monday-Wednesday -> 0, Thursday-Sunday -> 1.
inline int semiweek_bucket(Millis local) { return weekday(local) < 3 ? 0 : 1; }

// ---------------------------------------------------------------------------

namespace detail {

struct UserClicks {
  std::vector<Millis> times;             // sorted
  std::vector<const RawEvent*> events;   // parallel to times
};

inline std::map<std::string, UserClicks> index_user_clicks(const SessionStore& store) {
  std::map<std::string, UserClicks> out;
  for (const auto& [user, ids] : store.user_index()) {
    std::vector<const RawEvent*> evs;
    for (const auto& id : ids)
      for (const auto* c : session_clicks(store.at(id))) evs.push_back(c);
    std::stable_sort(evs.begin(), evs.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
    auto& uc = out[user];
    for (auto* e : evs) {
      uc.times.push_back(e->timestamp);
      uc.events.push_back(e);
    }
  }
  return out;
}

/// Reference time of a session: its last click, or last non-buy event.
inline Millis reference_time(const Session& s) {
  Millis ref = s.start();
  bool have_click = false;
  for (const auto& ev : s.events) {
    if (ev.type == EventType::pageview) {
      ref = ev.timestamp;
      have_click = true;
    } else if (ev.type != EventType::buy && !have_click) {
      ref = ev.timestamp;
    }
  }
  return ref;
}

/// Number of user clicks with timestamp in (from, to].
inline std::size_t count_in(const UserClicks& uc, Millis from, Millis to) {
  auto lo = std::upper_bound(uc.times.begin(), uc.times.end(), from);
  auto hi = std::upper_bound(uc.times.begin(), uc.times.end(), to);
  return static_cast<std::size_t>(hi - lo);
}

}  // namespace detail

/// Session ids in dataset row order (store order, i.e. by session id).
inline std::vector<std::string> row_universe(const SessionStore& store) {
  std::vector<std::string> ids;
  ids.reserve(store.size());
  for (const auto& [id, s] : store.sessions()) ids.push_back(id);
  return ids;
}

/// Features for every session, aligned with row_universe(store).
inline std::vector<SessionFeatures> compute_features(const SessionStore& store, const EmbeddingTable& table,
                                                     const FeatureOptions& opts = {}) {
  // Item price catalogue over all priced events: item -> (sum, count).
  std::unordered_map<std::string, std::pair<double, double>> catalogue;
  for (const auto& [id, s] : store.sessions())
    for (const auto& ev : s.events)
      if (ev.price) {
        auto& e = catalogue[ev.item_id];
        e.first += *ev.price;
        e.second += 1.0;
      }

  const auto clicks_by_user = detail::index_user_clicks(store);
  std::map<std::string, SessionFeatures> by_session;

  for (const auto& [user, ids] : store.user_index()) {
    std::vector<const Session*> history;
    for (const auto& id : ids) history.push_back(&store.at(id));
    const auto ratios = click_buy_ratio(history);
    const auto& uc = clicks_by_user.at(user);

    std::map<std::string, double> item_time;  // cumulative over sessions so far
    std::vector<double> purchase_prices;
    std::vector<double> gaps;  // sessions preceding each prior buy session
    std::size_t since_buy = 0;

    for (std::size_t k = 0; k < history.size(); ++k) {
      const Session& s = *history[k];
      SessionFeatures f;
      const auto clicks = session_clicks(s);

      if (!clicks.empty()) {
        f.duration_before_purchase = static_cast<double>(clicks.back()->timestamp - clicks.front()->timestamp) / 1000.0;
        const Millis local = local_time(clicks.front()->timestamp, opts.utc_offset_hours);
        f.hour = static_cast<double>(floor_div(local, kMillisPerHour) % 24);
      } else {
        const Millis local = local_time(detail::reference_time(s), opts.utc_offset_hours);
        f.hour = static_cast<double>(floor_div(local, kMillisPerHour) % 24);
      }
      f.n_clicks = static_cast<double>(clicks.size());
      f.click_buy_ratio = ratios[k];
      f.median_sessions_before_buy = median(gaps);
      f.avg_purchase_price = purchase_prices.empty()
                                 ? 0.0
                                 : std::accumulate(purchase_prices.begin(), purchase_prices.end(), 0.0) /
                                       static_cast<double>(purchase_prices.size());

      const auto durations = item_durations(s);
      for (const auto& [item, d] : durations) {
        f.session_dwell += d;
        item_time[item] += d;
      }
      for (const auto& [item, d] : durations) f.item_duration_total += item_time[item];

      // Catalogue price of the clicked items, minus this session's own priced events.
      std::unordered_map<std::string, std::pair<double, double>> own;
      for (const auto& ev : s.events)
        if (ev.price) {
          own[ev.item_id].first += *ev.price;
          own[ev.item_id].second += 1.0;
        }
      double price_sum = 0.0;
      std::size_t priced = 0;
      for (const auto& [item, d] : durations) {
        auto it = catalogue.find(item);
        if (it == catalogue.end()) continue;
        double sum = it->second.first, cnt = it->second.second;
        if (auto o = own.find(item); o != own.end()) {
          sum -= o->second.first;
          cnt -= o->second.second;
        }
        if (cnt > 0.5) {
          price_sum += sum / cnt;
          ++priced;
        }
      }
      f.price = priced ? price_sum / static_cast<double>(priced) : 0.0;

      const Millis ref = detail::reference_time(s);
      f.views_24h = static_cast<double>(detail::count_in(uc, ref - kMillisPerDay, ref));
      f.views_week = static_cast<double>(detail::count_in(uc, ref - 7 * kMillisPerDay, ref));

      std::string text;
      std::set<std::string> described;
      for (const auto* c : clicks)
        if (c->description && described.insert(c->item_id).second) text += *c->description + " ";
      f.desc = embed_description(text, table);

      by_session.emplace(s.session_id, std::move(f));

      // Update history with this session.
      if (s.is_buy()) {
        gaps.push_back(static_cast<double>(since_buy));
        since_buy = 0;
        for (const auto& ev : s.events)
          if (ev.type == EventType::buy && ev.price) purchase_prices.push_back(*ev.price);
      } else {
        ++since_buy;
      }
    }
  }

  std::vector<SessionFeatures> out;
  out.reserve(store.size());
  for (const auto& id : row_universe(store)) out.push_back(std::move(by_session.at(id)));
  return out;
}

// ---------------------------------------------------------------------------
// Category aggregation

struct AggregationFragment {
  Matrix counts;  // rows aligned with row_universe(store)
  std::vector<std::string> names;
};

/// The `k` categories with the most pageviews (ties by id).
inline std::vector<std::string> top_categories(const SessionStore& store, std::size_t k) {
  std::map<std::string, std::size_t> views;
  for (const auto& [id, s] : store.sessions())
    for (const auto& ev : s.events)
      if (ev.type == EventType::pageview && ev.category_id) ++views[*ev.category_id];
  require(views.size() >= k, "store has only " + std::to_string(views.size()) + " viewed categories, " +
                                 std::to_string(k) + " requested");
  std::vector<std::pair<std::string, std::size_t>> ranked(views.begin(), views.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

/// Pageview counts per (category, time bucket) for each session row. A row
/// counts the user's clicks from the start of the ISO week containing the
/// session's reference time up to that time. Weekly uses one bucket per
/// category; semiweekly splits the week into Mon-Wed and Thu-Sun.
inline AggregationFragment aggregate_pageviews(const SessionStore& store, const std::vector<std::string>& categories,
                                               Aggregation scheme, const FeatureOptions& opts = {}) {
  require(!categories.empty(), "category list must not be empty");
  std::set<std::string> known;
  for (const auto& [id, s] : store.sessions())
    for (const auto& ev : s.events)
      if (ev.category_id) known.insert(*ev.category_id);
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (!store.empty() && !known.count(categories[i]))
      fail(ErrorKind::invalid_argument, "unknown category id '" + categories[i] + "'");
    require(column_of.emplace(categories[i], i).second, "duplicate category id '" + categories[i] + "'");
  }

  const std::size_t buckets = buckets_per_category(scheme);
  AggregationFragment frag;
  for (const auto& c : categories) {
    if (scheme == Aggregation::weekly) {
      frag.names.push_back("agg:" + c + ":w");
    } else {
      frag.names.push_back("agg:" + c + ":s1");
      frag.names.push_back("agg:" + c + ":s2");
    }
  }
  const auto ids = row_universe(store);
  frag.counts = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(categories.size() * buckets));

  const auto clicks_by_user = detail::index_user_clicks(store);
  for (std::size_t row = 0; row < ids.size(); ++row) {
    const Session& s = store.at(ids[row]);
    const auto& uc = clicks_by_user.at(s.user_id);
    const Millis ref = detail::reference_time(s);
    const Millis from = week_start(local_time(ref, opts.utc_offset_hours)) - opts.utc_offset_hours * kMillisPerHour;
    auto lo = std::lower_bound(uc.times.begin(), uc.times.end(), from);
    auto hi = std::upper_bound(uc.times.begin(), uc.times.end(), ref);
    for (auto it = lo; it != hi; ++it) {
      const RawEvent* ev = uc.events[static_cast<std::size_t>(it - uc.times.begin())];
      if (!ev->category_id) continue;
      auto col = column_of.find(*ev->category_id);
      if (col == column_of.end()) continue;
      const std::size_t bucket =
          scheme == Aggregation::weekly ? 0 : static_cast<std::size_t>(semiweek_bucket(local_time(ev->timestamp, opts.utc_offset_hours)));
      frag.counts(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col->second * buckets + bucket)) += 1.0;
    }
  }
  return frag;
}

/// Concatenates scalar features, description dimensions and aggregation
/// columns, attaching buy labels.
inline Dataset assemble_dataset(const std::vector<std::string>& row_ids, const std::vector<int>& labels,
                                const std::vector<SessionFeatures>& features, const AggregationFragment& fragment,
                                Aggregation scheme, std::size_t category_count) {
  const std::size_t n = row_ids.size();
  require_dims(labels.size() == n && features.size() == n && static_cast<std::size_t>(fragment.counts.rows()) == n,
               "row universes of features, labels and aggregation fragment differ");
  require_dims(static_cast<std::size_t>(fragment.counts.cols()) == fragment.names.size(),
               "aggregation fragment names do not match its columns");

  Dataset ds;
  for (auto name : kScalarFeatureNames) ds.feature_names.emplace_back(name);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) ds.feature_names.push_back("desc_" + std::to_string(i));
  for (const auto& name : fragment.names) ds.feature_names.push_back(name);

  const auto n_scalar = static_cast<Eigen::Index>(kScalarFeatureNames.size());
  const auto n_desc = static_cast<Eigen::Index>(kEmbeddingDim);
  ds.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.feature_names.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto scalars = scalar_values(features[i]);
    for (Eigen::Index c = 0; c < n_scalar; ++c) ds.rows(r, c) = scalars[static_cast<std::size_t>(c)];
    require_dims(features[i].desc.size() == n_desc, "description vector must have 50 entries");
    ds.rows.block(r, n_scalar, 1, n_desc) = features[i].desc.transpose();
    ds.rows.block(r, n_scalar + n_desc, 1, fragment.counts.cols()) = fragment.counts.row(r);
  }
  ds.labels = labels;
  ds.row_ids = row_ids;
  ds.aggregation = scheme;
  ds.category_count = category_count;
  ds.validate();
  return ds;
}

/// Keeps every positive and a seeded sample (without replacement) of equally
/// many negatives, then shuffles the rows.
inline Dataset balance(const Dataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 1 ? pos : neg).push_back(i);
  require(!pos.empty(), "cannot balance a dataset without positives");
  require(neg.size() >= pos.size(), "cannot balance: " + std::to_string(pos.size()) + " positives exceed " +
                                        std::to_string(neg.size()) + " negatives");
  Rng rng(seed);
  rng.shuffle(neg);
  std::vector<std::size_t> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(pos.size()));
  std::sort(keep.begin(), keep.end());
  rng.shuffle(keep);
  Dataset out = ds.subset(keep);
  out.seed = seed;
  return out;
}

struct FeaturizeOptions {
  Aggregation scheme = Aggregation::weekly;
  std::size_t category_count = 257;
  std::optional<std::uint64_t> balance_seed;  // no balancing when empty
  FeatureOptions features;
};

/// store -> (optionally balanced) dataset.
inline Dataset featurize(const SessionStore& store, const EmbeddingTable& table, const FeaturizeOptions& opts) {
  const auto ids = row_universe(store);
  std::vector<int> labels;
  for (const auto& id : ids) labels.push_back(store.at(id).is_buy() ? 1 : 0);
  const auto categories = top_categories(store, opts.category_count);
  const auto features = compute_features(store, table, opts.features);
  const auto frag = aggregate_pageviews(store, categories, opts.scheme, opts.features);
  Dataset ds = assemble_dataset(ids, labels, features, frag, opts.scheme, opts.category_count);
  if (opts.balance_seed) ds = balance(ds, *opts.balance_seed);
  return ds;
}

}  // namespace pintent
