#pragma once

// Clickstream ingestion: JSON Lines events -> labeled, filtered sessions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pintent/error.hpp"
#include "pintent/io.hpp"

namespace pintent {

enum class EventType { pageview, basketview, buy, adclick, adview };

inline constexpr std::array<std::string_view, 5> kEventTypeNames = {"pageview", "basketview", "buy", "adclick",
                                                                    "adview"};

inline std::string_view to_string(EventType t) { return kEventTypeNames[static_cast<std::size_t>(t)]; }

inline std::optional<EventType> parse_event_type(std::string_view name) {
  for (std::size_t i = 0; i < kEventTypeNames.size(); ++i)
    if (kEventTypeNames[i] == name) return static_cast<EventType>(i);
  return std::nullopt;
}

inline bool is_ad_event(EventType t) { return t == EventType::adclick || t == EventType::adview; }

using Millis = std::int64_t;
inline constexpr Millis kMillisPerHour = 3'600'000;
inline constexpr Millis kMillisPerDay = 24 * kMillisPerHour;

struct RawEvent {
  std::string user_id;
  std::string session_id;
  Millis timestamp = 0;
  EventType type = EventType::pageview;
  std::string item_id;
  std::optional<std::string> category_id;
  std::optional<double> price;
  std::optional<std::string> description;

  bool operator==(const RawEvent&) const = default;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<RawEvent> events;
  std::vector<LineError> errors;
};

namespace detail {

inline std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key, std::string& err) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    err = std::string("field '") + key + "' must be a string";
    return std::nullopt;
  }
  return it->get<std::string>();
}

}  // namespace detail

/// Parses one JSON object into an event. On failure returns nullopt and sets `err`.
inline std::optional<RawEvent> parse_event_line(std::string_view line, std::string& err) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    err = std::string("malformed JSON: ") + e.what();
    return std::nullopt;
  }
  if (!obj.is_object()) {
    err = "line is not a JSON object";
    return std::nullopt;
  }

  RawEvent ev;
  for (const char* key : {"user_id", "session_id", "item_id", "event_type"}) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      err = std::string("missing required field '") + key + "'";
      return std::nullopt;
    }
    if (!it->is_string()) {
      err = std::string("field '") + key + "' must be a string";
      return std::nullopt;
    }
  }
  ev.user_id = obj["user_id"].get<std::string>();
  ev.session_id = obj["session_id"].get<std::string>();
  ev.item_id = obj["item_id"].get<std::string>();

  const auto type_name = obj["event_type"].get<std::string>();
  auto type = parse_event_type(type_name);
  if (!type) {
    err = "invalid event_type '" + type_name + "'";
    return std::nullopt;
  }
  ev.type = *type;

  auto ts = obj.find("timestamp");
  if (ts == obj.end() || ts->is_null()) {
    err = "missing required field 'timestamp'";
    return std::nullopt;
  }
  if (!ts->is_number_integer()) {
    err = "field 'timestamp' must be an integer (milliseconds)";
    return std::nullopt;
  }
  ev.timestamp = ts->get<Millis>();
  if (ev.timestamp < 0) {
    err = "field 'timestamp' must be non-negative";
    return std::nullopt;
  }

  ev.category_id = detail::optional_string(obj, "category_id", err);
  if (!err.empty()) return std::nullopt;
  ev.description = detail::optional_string(obj, "description", err);
  if (!err.empty()) return std::nullopt;

  if (auto p = obj.find("price"); p != obj.end() && !p->is_null()) {
    if (!p->is_number()) {
      err = "field 'price' must be a number";
      return std::nullopt;
    }
    const double price = p->get<double>();
    if (!(price >= 0.0) || !std::isfinite(price)) {
      err = "field 'price' must be finite and non-negative";
      return std::nullopt;
    }
    if (ev.type != EventType::buy && ev.type != EventType::basketview) {
      err = "field 'price' is only allowed on buy and basketview events";
      return std::nullopt;
    }
    ev.price = price;
  }
  return ev;
}

/// Reads JSON Lines. Bad lines become error records; blank lines are skipped.
inline ParseResult parse_events(std::istream& in) {
  if (!in) fail(ErrorKind::io, "event stream is not readable");
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string err;
    if (auto ev = parse_event_line(line, err))
      result.events.push_back(std::move(*ev));
    else
      result.errors.push_back({line_no, err});
  }
  if (in.bad()) fail(ErrorKind::io, "error while reading event stream");
  return result;
}

inline nlohmann::json event_to_json(const RawEvent& ev) {
  nlohmann::json j = {{"user_id", ev.user_id},
                      {"session_id", ev.session_id},
                      {"timestamp", ev.timestamp},
                      {"event_type", std::string(to_string(ev.type))},
                      {"item_id", ev.item_id}};
  if (ev.category_id) j["category_id"] = *ev.category_id;
  if (ev.price) j["price"] = *ev.price;
  if (ev.description) j["description"] = *ev.description;
  return j;
}

// ---------------------------------------------------------------------------
// Sessions

enum class SessionLabel { non_buy, buy };

struct Session {
  std::string session_id;
  std::string user_id;
  std::vector<RawEvent> events;  // ascending timestamp, stable on input order
  std::set<std::string> bought_items;
  SessionLabel label = SessionLabel::non_buy;

  bool is_buy() const { return label == SessionLabel::buy; }
  Millis start() const { return events.front().timestamp; }

  /// Timestamp of the earliest buy event, if any.
  std::optional<Millis> first_buy() const {
    for (const auto& ev : events)
      if (ev.type == EventType::buy) return ev.timestamp;
    return std::nullopt;
  }

  bool operator==(const Session&) const = default;
};

/// Immutable after construction; the user index is derived from the sessions.
class SessionStore {
 public:
  SessionStore() = default;

  explicit SessionStore(std::map<std::string, Session> sessions) : sessions_(std::move(sessions)) {
    std::map<std::string, std::vector<std::pair<Millis, std::string>>> order;
    for (const auto& [id, s] : sessions_) {
      require(!s.events.empty(), "session '" + id + "' has no events");
      order[s.user_id].emplace_back(s.start(), id);
    }
    for (auto& [user, v] : order) {
      std::sort(v.begin(), v.end());
      auto& ids = user_index_[user];
      for (auto& [ts, id] : v) ids.push_back(id);
    }
  }

  const std::map<std::string, Session>& sessions() const { return sessions_; }
  /// user id -> session ids ordered by (session start, session id).
  const std::map<std::string, std::vector<std::string>>& user_index() const { return user_index_; }

  std::size_t size() const { return sessions_.size(); }
  bool empty() const { return sessions_.empty(); }

  const Session& at(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorKind::invalid_argument, "unknown session '" + session_id + "'");
    return it->second;
  }

  std::size_t buy_count() const {
    return static_cast<std::size_t>(
        std::count_if(sessions_.begin(), sessions_.end(), [](const auto& kv) { return kv.second.is_buy(); }));
  }

  bool operator==(const SessionStore& o) const { return sessions_ == o.sessions_; }

 private:
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::vector<std::string>> user_index_;
};

/// Counters collected across the ingest stages; serialized as the ingest report.
struct IngestReport {
  std::map<std::string, std::size_t> event_counts;  // parsed events per type
  std::size_t lines_dropped = 0;
  std::vector<LineError> line_errors;
  std::size_t users_parsed = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t ad_events_ignored = 0;
  std::size_t users_removed_min_clicks = 0;
  std::size_t sessions_removed_min_clicks = 0;
  std::size_t buy_sessions_unusable = 0;
  std::size_t users_final = 0;
  std::size_t sessions_final = 0;
  std::size_t buy_sessions_final = 0;

  nlohmann::json to_json() const {
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& e : line_errors) errs.push_back({{"line", e.line}, {"message", e.message}});
    return {{"event_counts", event_counts},
            {"lines_dropped", lines_dropped},
            {"line_errors", errs},
            {"users_parsed", users_parsed},
            {"duplicates_dropped", duplicates_dropped},
            {"ad_events_ignored", ad_events_ignored},
            {"users_removed_min_clicks", users_removed_min_clicks},
            {"sessions_removed_min_clicks", sessions_removed_min_clicks},
            {"buy_sessions_unusable", buy_sessions_unusable},
            {"users_final", users_final},
            {"sessions_final", sessions_final},
            {"buy_sessions_final", buy_sessions_final}};
  }
};

namespace detail {

inline void finalize_session(Session& s) {
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
  s.user_id = s.events.front().user_id;
  s.bought_items.clear();
  for (const auto& ev : s.events)
    if (ev.type == EventType::buy) s.bought_items.insert(ev.item_id);
  s.label = s.bought_items.empty() ? SessionLabel::non_buy : SessionLabel::buy;
}

}  // namespace detail

/// Groups events by session id. Ad events are ignored; repeated
/// (session, timestamp, type, item) tuples keep only the first occurrence.
inline SessionStore sessionize(const std::vector<RawEvent>& events, IngestReport* report = nullptr) {
  std::map<std::string, Session> sessions;
  std::set<std::tuple<std::string_view, Millis, EventType, std::string_view>> seen;
  std::size_t ads = 0, dups = 0;
  for (const auto& ev : events) {
    if (is_ad_event(ev.type)) {
      ++ads;
      continue;
    }
    if (!seen.emplace(ev.session_id, ev.timestamp, ev.type, ev.item_id).second) {
      ++dups;
      continue;
    }
    auto& s = sessions[ev.session_id];
    s.session_id = ev.session_id;
    s.events.push_back(ev);
  }
  for (auto& [id, s] : sessions) detail::finalize_session(s);
  if (report) {
    report->ad_events_ignored += ads;
    report->duplicates_dropped += dups;
  }
  return SessionStore(std::move(sessions));
}

/// Clicks are all retained (non-ad) events of a user across the store.
inline std::map<std::string, std::size_t> user_click_counts(const SessionStore& store) {
  std::map<std::string, std::size_t> clicks;
  for (const auto& [id, s] : store.sessions()) clicks[s.user_id] += s.events.size();
  return clicks;
}

/// Drops every session of users with fewer than `min_clicks` clicks in total.
inline SessionStore filter_min_clicks(const SessionStore& store, std::size_t min_clicks = 10,
                                      IngestReport* report = nullptr) {
  require(min_clicks >= 1, "min_clicks must be at least 1");
  const auto clicks = user_click_counts(store);
  std::map<std::string, Session> kept;
  std::set<std::string> removed_users;
  std::size_t removed_sessions = 0;
  for (const auto& [id, s] : store.sessions()) {
    if (clicks.at(s.user_id) >= min_clicks) {
      kept.emplace(id, s);
    } else {
      removed_users.insert(s.user_id);
      ++removed_sessions;
    }
  }
  if (report) {
    report->users_removed_min_clicks += removed_users.size();
    report->sessions_removed_min_clicks += removed_sessions;
  }
  return SessionStore(std::move(kept));
}

struct WindowedSession {
  Session session;
  bool usable = true;  // false when no feature event survives the exclusion
};

/// For buy sessions, removes every non-buy event at or after (first buy - horizon).
/// Buy events stay as label evidence. Non-buy sessions pass through unchanged.
inline WindowedSession exclude_prediction_window(const Session& session, Millis horizon = kMillisPerDay) {
  require(horizon > 0, "prediction horizon must be positive");
  WindowedSession out{session, true};
  const auto buy_at = session.first_buy();
  if (!buy_at) return out;
  const Millis cutoff = *buy_at - horizon;
  std::vector<RawEvent> kept;
  bool has_feature_event = false;
  for (const auto& ev : session.events) {
    if (ev.type == EventType::buy) {
      kept.push_back(ev);
    } else if (ev.timestamp < cutoff) {
      kept.push_back(ev);
      has_feature_event = true;
    }
  }
  out.session.events = std::move(kept);
  out.usable = has_feature_event;
  return out;
}

/// Applies the exclusion to every session and drops the unusable ones.
inline SessionStore apply_prediction_window(const SessionStore& store, Millis horizon = kMillisPerDay,
                                            IngestReport* report = nullptr) {
  std::map<std::string, Session> kept;
  std::size_t unusable = 0;
  for (const auto& [id, s] : store.sessions()) {
    auto w = exclude_prediction_window(s, horizon);
    if (w.usable)
      kept.emplace(id, std::move(w.session));
    else
      ++unusable;
  }
  if (report) report->buy_sessions_unusable += unusable;
  return SessionStore(std::move(kept));
}

struct IngestOptions {
  std::size_t min_clicks = 10;
  Millis horizon = kMillisPerDay;
};

struct IngestResult {
  SessionStore store;
  IngestReport report;
};

/// parse -> sessionize -> min-click filter -> prediction-window exclusion.
inline IngestResult ingest(std::istream& in, const IngestOptions& opts = {}) {
  IngestResult r;
  auto parsed = parse_events(in);
  for (auto name : kEventTypeNames) r.report.event_counts[std::string(name)] = 0;
  std::set<std::string> users;
  for (const auto& ev : parsed.events) {
    ++r.report.event_counts[std::string(to_string(ev.type))];
    users.insert(ev.user_id);
  }
  r.report.users_parsed = users.size();
  r.report.lines_dropped = parsed.errors.size();
  r.report.line_errors = std::move(parsed.errors);

  auto store = sessionize(parsed.events, &r.report);
  store = filter_min_clicks(store, opts.min_clicks, &r.report);
  r.store = apply_prediction_window(store, opts.horizon, &r.report);

  r.report.users_final = r.store.user_index().size();
  r.report.sessions_final = r.store.size();
  r.report.buy_sessions_final = r.store.buy_count();
  return r;
}

// ---------------------------------------------------------------------------
// Store persistence: {"format": "pintent-store", "version": 1, "sessions": [...]}
// Sessions appear in session-id order with events in stored order, so
// load(save(x)) == x and save(load(bytes)) == bytes.

inline constexpr int kStoreVersion = 1;

inline nlohmann::json store_to_json(const SessionStore& store) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& [id, s] : store.sessions()) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : s.events) events.push_back(event_to_json(ev));
    sessions.push_back({{"session_id", s.session_id},
                        {"user_id", s.user_id},
                        {"label", s.is_buy() ? "buy" : "non_buy"},
                        {"bought_items", s.bought_items},
                        {"events", events}});
  }
  return {{"format", "pintent-store"}, {"version", kStoreVersion}, {"sessions", sessions}};
}

inline SessionStore store_from_json(const nlohmann::json& doc) {
  check_schema(doc, "pintent-store", kStoreVersion);
  std::map<std::string, Session> sessions;
  try {
    for (const auto& js : doc.at("sessions")) {
      Session s;
      s.session_id = js.at("session_id").get<std::string>();
      s.user_id = js.at("user_id").get<std::string>();
      s.label = js.at("label") == "buy" ? SessionLabel::buy : SessionLabel::non_buy;
      s.bought_items = js.at("bought_items").get<std::set<std::string>>();
      for (const auto& je : js.at("events")) {
        std::string err;
        auto ev = parse_event_line(je.dump(), err);
        if (!ev) fail(ErrorKind::parse, "store event in session '" + s.session_id + "': " + err);
        s.events.push_back(std::move(*ev));
      }
      if (s.events.empty()) fail(ErrorKind::parse, "store session '" + s.session_id + "' has no events");
      if (s.is_buy() != !s.bought_items.empty())
        fail(ErrorKind::parse, "store session '" + s.session_id + "' has an inconsistent label");
      sessions.emplace(s.session_id, std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed store document: ") + e.what());
  }
  return SessionStore(std::move(sessions));
}

inline void save_store(const SessionStore& store, const std::string& path) {
  write_file(path, render_json(store_to_json(store)));
}

inline SessionStore load_store(const std::string& path) { return store_from_json(parse_json_file(path)); }

}  // namespace pintent
