#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "pintent/ingest.hpp"
#include "pintent/synth.hpp"
#include "support.hpp"

using namespace pintent;
using testing_support::event;
using testing_support::line;

namespace {

constexpr Millis H = kMillisPerHour;

ParseResult parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_events(in);
}

}  // namespace

TEST(ParseEvents, ValidPageview) {
  const auto r = parse_text(
      R"({"user_id":"u1","session_id":"s1","timestamp":1500,"event_type":"pageview","item_id":"i9","category_id":"c3","description":"red shoe"})"
      "\n");
  ASSERT_TRUE(r.errors.empty());
  ASSERT_EQ(r.events.size(), 1u);
  const auto& e = r.events[0];
  EXPECT_EQ(e.user_id, "u1");
  EXPECT_EQ(e.session_id, "s1");
  EXPECT_EQ(e.timestamp, 1500);
  EXPECT_EQ(e.type, EventType::pageview);
  EXPECT_EQ(e.item_id, "i9");
  EXPECT_EQ(e.category_id, "c3");
  EXPECT_EQ(e.description, "red shoe");
  EXPECT_FALSE(e.price.has_value());
}

TEST(ParseEvents, UnknownEventTypeIsReportedWithLineNumber) {
  const auto r = parse_text(line(event("u", "s", 1, EventType::pageview, "i")) + "\n" +
                            R"({"user_id":"u","session_id":"s","timestamp":2,"event_type":"purchase","item_id":"i"})" +
                            "\n");
  ASSERT_EQ(r.events.size(), 1u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 2u);
  EXPECT_NE(r.errors[0].message.find("purchase"), std::string::npos);
}

TEST(ParseEvents, MissingFieldAndBadValuesAreLineErrors) {
  const std::string text =
      R"({"session_id":"s","timestamp":2,"event_type":"buy","item_id":"i"})"
      "\n"
      R"({"user_id":"u","session_id":"s","timestamp":-5,"event_type":"pageview","item_id":"i"})"
      "\n"
      R"({"user_id":"u","session_id":"s","timestamp":5,"event_type":"pageview","item_id":"i","price":3.0})"
      "\n"
      R"({"user_id":"u","session_id":"s","timestamp":5,"event_type":"buy","item_id":"i","price":-1})"
      "\n"
      "not json\n"
      "\n"
      R"({"user_id":"u","session_id":"s","timestamp":7,"event_type":"buy","item_id":"i","price":9.5})"
      "\n";
  const auto r = parse_text(text);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].price, 9.5);
  ASSERT_EQ(r.errors.size(), 5u);
  std::vector<std::size_t> lines;
  for (const auto& e : r.errors) lines.push_back(e.line);
  EXPECT_EQ(lines, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  EXPECT_NE(r.errors[0].message.find("user_id"), std::string::npos);
}

TEST(ParseEvents, FileOrderPreserved) {
  std::string text;
  for (int i = 5; i > 0; --i) text += line(event("u", "s", i, EventType::pageview, "i" + std::to_string(i))) + "\n";
  const auto r = parse_text(text);
  ASSERT_EQ(r.events.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(r.events[static_cast<std::size_t>(i)].timestamp, 5 - i);
}

// 100k events in the snapshot proportions: 78,360 pageviews from 13,342 users,
// 16,409 basketviews from 3,091 users, 2,430 buys from 2,014 users, and the
// remainder split between the two ad types.
TEST(ParseEvents, SnapshotProportionFixture) {
  struct Part {
    EventType type;
    std::size_t count;
    std::size_t users;
  };
  const std::vector<Part> parts = {{EventType::pageview, 78360, 13342},
                                   {EventType::basketview, 16409, 3091},
                                   {EventType::buy, 2430, 2014},
                                   {EventType::adview, 1401, 500},
                                   {EventType::adclick, 1400, 500}};
  std::vector<std::string> lines;
  for (const auto& p : parts)
    for (std::size_t i = 0; i < p.count; ++i) {
      const bool priced = p.type == EventType::buy || p.type == EventType::basketview;
      auto e = event("u" + std::to_string(i % p.users), "s" + std::to_string(i % 9000), static_cast<Millis>(i), p.type,
                     "item" + std::to_string(i % 2500), std::string("c1"),
                     priced ? std::optional<double>(10.0) : std::nullopt);
      lines.push_back(line(e));
    }
  ASSERT_EQ(lines.size(), 100000u);
  Rng rng(7);
  rng.shuffle(lines);
  std::string text;
  for (const auto& l : lines) text += l + "\n";

  const auto r = parse_text(text);
  EXPECT_TRUE(r.errors.empty());
  std::map<EventType, std::size_t> counts;
  std::map<EventType, std::set<std::string>> users;
  for (const auto& e : r.events) {
    ++counts[e.type];
    users[e.type].insert(e.user_id);
  }
  EXPECT_EQ(counts[EventType::pageview], 78360u);
  EXPECT_EQ(counts[EventType::basketview], 16409u);
  EXPECT_EQ(counts[EventType::buy], 2430u);
  EXPECT_EQ(users[EventType::pageview].size(), 13342u);
  EXPECT_EQ(users[EventType::basketview].size(), 3091u);
  EXPECT_EQ(users[EventType::buy].size(), 2014u);
}

TEST(Sessionize, SortsGroupsAndLabels) {
  std::vector<RawEvent> evs = {
      event("u1", "a", 30, EventType::pageview, "x"), event("u2", "b", 5, EventType::pageview, "y"),
      event("u1", "a", 10, EventType::pageview, "z"), event("u2", "b", 1, EventType::pageview, "y"),
      event("u1", "a", 20, EventType::buy, "x", std::nullopt, 3.0),
  };
  const auto store = sessionize(evs);
  ASSERT_EQ(store.size(), 2u);
  const auto& a = store.at("a");
  ASSERT_EQ(a.events.size(), 3u);
  EXPECT_EQ(a.events[0].timestamp, 10);
  EXPECT_EQ(a.events[1].timestamp, 20);
  EXPECT_EQ(a.events[2].timestamp, 30);
  EXPECT_TRUE(a.is_buy());
  EXPECT_EQ(a.bought_items, (std::set<std::string>{"x"}));
  const auto& b = store.at("b");
  EXPECT_FALSE(b.is_buy());
  EXPECT_TRUE(b.bought_items.empty());
  EXPECT_EQ(b.events.size(), 2u);
  EXPECT_EQ(store.user_index().at("u1"), (std::vector<std::string>{"a"}));
}

TEST(Sessionize, StableTieBreakDropsAdsAndDuplicates) {
  std::vector<RawEvent> evs = {
      event("u", "s", 5, EventType::pageview, "first"), event("u", "s", 5, EventType::pageview, "second"),
      event("u", "s", 5, EventType::pageview, "first"),  // exact duplicate
      event("u", "s", 3, EventType::adview, "ad"),       event("u", "s", 4, EventType::adclick, "ad"),
  };
  IngestReport rep;
  const auto store = sessionize(evs, &rep);
  const auto& s = store.at("s");
  ASSERT_EQ(s.events.size(), 2u);
  EXPECT_EQ(s.events[0].item_id, "first");
  EXPECT_EQ(s.events[1].item_id, "second");
  EXPECT_EQ(rep.duplicates_dropped, 1u);
  EXPECT_EQ(rep.ad_events_ignored, 2u);
}

TEST(Sessionize, EmptyInputGivesEmptyStore) { EXPECT_TRUE(sessionize({}).empty()); }

TEST(Sessionize, LabelMatchesBoughtItemsOnSyntheticData) {
  SynthConfig cfg;
  cfg.n_users = 80;
  cfg.buy_rate = 0.2;
  cfg.seed = 3;
  std::istringstream in(generate(cfg).events);
  const auto store = sessionize(parse_events(in).events);
  for (const auto& [id, s] : store.sessions()) {
    bool has_buy = false;
    for (const auto& e : s.events) has_buy |= e.type == EventType::buy;
    EXPECT_EQ(s.is_buy(), !s.bought_items.empty());
    EXPECT_EQ(s.is_buy(), has_buy);
    EXPECT_TRUE(std::is_sorted(s.events.begin(), s.events.end(),
                               [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
  }
}

TEST(FilterMinClicks, BoundaryAgainstCountingOracle) {
  // u9 has 9 clicks, u10 exactly 10, u11 eleven, spread over two sessions each.
  std::vector<RawEvent> evs;
  std::map<std::string, int> expected;
  for (int n : {9, 10, 11}) {
    const std::string u = "u" + std::to_string(n);
    for (int k = 0; k < n; ++k)
      evs.push_back(event(u, u + (k % 2 ? "_a" : "_b"), k, k == n - 1 ? EventType::basketview : EventType::pageview,
                          "i", std::nullopt, k == n - 1 ? std::optional<double>(1.0) : std::nullopt));
    expected[u] = n;
  }
  const auto store = sessionize(evs);
  std::map<std::string, int> oracle;
  for (const auto& e : evs) ++oracle[e.user_id];
  EXPECT_EQ(oracle, expected);

  IngestReport rep;
  const auto kept = filter_min_clicks(store, 10, &rep);
  EXPECT_EQ(kept.user_index().count("u9"), 0u);
  EXPECT_EQ(kept.user_index().count("u10"), 1u);
  EXPECT_EQ(kept.user_index().count("u11"), 1u);
  EXPECT_EQ(kept.size(), 4u);
  EXPECT_EQ(rep.users_removed_min_clicks, 1u);
  EXPECT_EQ(rep.sessions_removed_min_clicks, 2u);
}

TEST(FilterMinClicks, IdempotentAndEmpty) {
  SynthConfig cfg;
  cfg.n_users = 60;
  cfg.sessions_per_user = 2.0;
  cfg.seed = 11;
  std::istringstream in(generate(cfg).events);
  const auto store = sessionize(parse_events(in).events);
  const auto once = filter_min_clicks(store, 10);
  EXPECT_LT(once.size(), store.size());
  EXPECT_EQ(filter_min_clicks(once, 10), once);
  EXPECT_TRUE(filter_min_clicks(SessionStore{}, 10).empty());
  EXPECT_THROW(filter_min_clicks(store, 0), Error);
}

TEST(PredictionWindow, RemovesEventsInsideHorizon) {
  const auto store = sessionize({event("u", "s", 90 * H, EventType::pageview, "a"),
                                 event("u", "s", 50 * H, EventType::pageview, "b"),
                                 event("u", "s", 100 * H, EventType::buy, "a", std::nullopt, 2.0)});
  const auto w = exclude_prediction_window(store.at("s"));
  EXPECT_TRUE(w.usable);
  ASSERT_EQ(w.session.events.size(), 2u);
  EXPECT_EQ(w.session.events[0].timestamp, 50 * H);
  EXPECT_EQ(w.session.events[1].type, EventType::buy);
  EXPECT_TRUE(w.session.is_buy());
}

TEST(PredictionWindow, NonBuyUnchangedAndEmptiedBuyUnusable) {
  const auto store = sessionize({event("u", "n", 1, EventType::pageview, "a"),
                                 event("u", "n", 2, EventType::pageview, "b"),
                                 event("u", "b", 99 * H, EventType::pageview, "a"),
                                 event("u", "b", 100 * H, EventType::buy, "a", std::nullopt, 2.0)});
  const auto n = exclude_prediction_window(store.at("n"));
  EXPECT_TRUE(n.usable);
  EXPECT_EQ(n.session, store.at("n"));
  EXPECT_FALSE(exclude_prediction_window(store.at("b")).usable);
  EXPECT_THROW(exclude_prediction_window(store.at("b"), 0), Error);
}

TEST(PredictionWindow, NeverIncreasesEventCount) {
  SynthConfig cfg;
  cfg.n_users = 100;
  cfg.buy_rate = 0.3;
  cfg.seed = 5;
  std::istringstream in(generate(cfg).events);
  const auto store = sessionize(parse_events(in).events);
  for (const auto& [id, s] : store.sessions()) {
    const auto w = exclude_prediction_window(s);
    EXPECT_LE(w.session.events.size(), s.events.size());
    if (!s.is_buy()) {
      EXPECT_EQ(w.session, s);
    }
  }
}

// Unusable buy sessions counted by the pipeline vs a direct scan of the raw
// events: a buy session is unusable when none of its non-buy events precede
// the first buy by more than 24 hours.
TEST(PredictionWindow, UnusableCountMatchesBruteForceScan) {
  SynthConfig cfg;
  cfg.n_users = 400;
  cfg.buy_rate = 0.2;
  cfg.seed = 9;
  const auto gen = generate(cfg);
  std::istringstream in(gen.events);
  const auto result = ingest(in, {1, kMillisPerDay});

  std::istringstream in2(gen.events);
  std::map<std::string, std::vector<RawEvent>> by_session;
  for (const auto& e : parse_events(in2).events)
    if (!is_ad_event(e.type)) by_session[e.session_id].push_back(e);
  std::size_t unusable = 0;
  for (const auto& [id, evs] : by_session) {
    Millis first_buy = -1;
    for (const auto& e : evs)
      if (e.type == EventType::buy && (first_buy < 0 || e.timestamp < first_buy)) first_buy = e.timestamp;
    if (first_buy < 0) continue;
    bool any_before = false;
    for (const auto& e : evs) any_before |= e.type != EventType::buy && e.timestamp < first_buy - kMillisPerDay;
    unusable += !any_before;
  }
  EXPECT_GT(unusable, 0u);
  EXPECT_EQ(result.report.buy_sessions_unusable, unusable);
}

TEST(Ingest, DeterministicAndRoundTrips) {
  SynthConfig cfg;
  cfg.n_users = 50;
  cfg.seed = 2;
  const auto gen = generate(cfg);
  std::istringstream a(gen.events), b(gen.events);
  const auto r1 = ingest(a), r2 = ingest(b);
  EXPECT_EQ(r1.store, r2.store);
  EXPECT_EQ(r1.report.to_json(), r2.report.to_json());
  EXPECT_EQ(r1.report.lines_dropped, 0u);

  testing_support::TempDir dir("ingest");
  save_store(r1.store, dir.file("store.json"));
  const auto loaded = load_store(dir.file("store.json"));
  EXPECT_EQ(loaded, r1.store);
  save_store(loaded, dir.file("again.json"));
  EXPECT_EQ(read_file(dir.file("store.json")), read_file(dir.file("again.json")));
}

TEST(Ingest, StoreSchemaVersionChecked) {
  testing_support::TempDir dir("schema");
  write_file(dir.file("bad.json"), R"({"format":"pintent-store","version":99,"sessions":[]})");
  try {
    load_store(dir.file("bad.json"));
    FAIL() << "expected a schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema_version);
  }
}

TEST(Ingest, UnreadableStreamIsFatal) {
  std::ifstream missing("/nonexistent/pintent/events.jsonl");
  EXPECT_THROW(parse_events(missing), Error);
}
