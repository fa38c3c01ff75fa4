#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "inteval/error.hpp"
#include "inteval/judge.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace inteval;
using namespace inteval::judge;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// 30 cases, half per article, with rationale strings unique to each
// (case, source) so that containment checks are meaningful.
std::vector<GridCase> grid_cases() {
  std::vector<GridCase> cases;
  for (int i = 0; i < 30; ++i) {
    GridCase c;
    c.case_id = fmt::format("001-{:05d}", 1000 + i);
    c.article = i < 15 ? 6 : 8;
    for (Source s : {Source::kMarc, Source::kIsr, Source::kExpertA})
      c.rationales[s] = {fmt::format("rationale-{}-{}-a", c.case_id, to_string(s)),
                         fmt::format("rationale-{}-{}-b", c.case_id, to_string(s))};
    cases.push_back(c);
  }
  return cases;
}

ShotLabels grid_labels(const std::vector<GridCase>& cases) {
  ShotLabels labels;
  for (std::size_t i = 0; i < cases.size(); ++i)
    for (Source s : {Source::kMarc, Source::kIsr, Source::kExpertA}) {
      labels[{cases[i].case_id, s, Criterion::kSupport}] = i % 2 ? Answer::kSupport : Answer::kDoNotSupport;
      labels[{cases[i].case_id, s, Criterion::kSufficiency}] =
          i % 3 ? Answer::kInsufficient : Answer::kSufficient;
    }
  return labels;
}

JudgeTask support_task() {
  JudgeTask t;
  t.case_id = "001-1";
  t.source = Source::kIsr;
  t.criterion = Criterion::kSupport;
  t.article = 8;
  t.rationale_texts = {"the applicant's correspondence was opened", "without a court order"};
  return t;
}

std::string response(const std::string& answer, const std::string& confidence) {
  return fmt::format("**Answer:** {}\n**Confidence:** {}\n**Explanation:** One. Two. Three.", answer,
                     confidence);
}

}  // namespace

TEST(Prompt, ByteStable) {
  const auto t = support_task();
  EXPECT_EQ(build_prompt(t), build_prompt(t));
  const auto cases = grid_cases();
  const auto grid = build_grid(cases, grid_labels(cases));
  for (std::size_t i = 0; i < grid.size(); i += 37) EXPECT_EQ(build_prompt(grid[i]), build_prompt(grid[i]));
}

TEST(Prompt, ZeroShotSupportLayout) {
  const auto p = build_prompt(support_task());
  EXPECT_NE(p.find("Support / Do Not Support"), std::string::npos);
  EXPECT_EQ(p.find("Example"), std::string::npos);
  EXPECT_NE(p.find("legal expert"), std::string::npos);
  EXPECT_NE(p.find("You are very certain of your decision"), std::string::npos);
  EXPECT_NE(p.find(article_text(8)), std::string::npos);
  for (const auto& r : support_task().rationale_texts) EXPECT_NE(p.find(r), std::string::npos);
  EXPECT_NE(p.find("**Confidence:** High / Medium / Low"), std::string::npos);
}

TEST(Prompt, SufficiencyFormatLine) {
  auto t = support_task();
  t.criterion = Criterion::kSufficiency;
  const auto p = build_prompt(t);
  EXPECT_NE(p.find("Sufficient / Insufficient"), std::string::npos);
  EXPECT_EQ(p.find("Support / Do Not Support"), std::string::npos);
}

TEST(Prompt, FewShotSufficiencyArticleSix) {
  const auto cases = grid_cases();
  const auto labels = grid_labels(cases);
  const auto shots = select_shots(cases, 3, Source::kMarc, Criterion::kSufficiency, labels);
  ASSERT_EQ(shots.size(), 4u);
  std::set<std::string> seen;
  for (const auto& s : shots) {
    EXPECT_NE(s.case_id, cases[3].case_id);
    const auto it = std::find_if(cases.begin(), cases.end(), [&](const GridCase& c) { return c.case_id == s.case_id; });
    ASSERT_NE(it, cases.end());
    EXPECT_EQ(it->article, 6);
    EXPECT_EQ(s.rationales, it->rationales.at(Source::kMarc));
    EXPECT_EQ(s.answer, labels.at({s.case_id, Source::kMarc, Criterion::kSufficiency}));
    seen.insert(s.case_id);
  }
  EXPECT_EQ(seen.size(), 4u);

  JudgeTask t;
  t.case_id = cases[3].case_id;
  t.source = Source::kMarc;
  t.criterion = Criterion::kSufficiency;
  t.article = 6;
  t.rationale_texts = cases[3].rationales.at(Source::kMarc);
  t.shots = shots;
  const auto p = build_prompt(t);
  for (int k = 1; k <= 4; ++k) EXPECT_NE(p.find(fmt::format("Example {}:", k)), std::string::npos);
  EXPECT_EQ(count_of(p, "Example "), 4u);
}

TEST(Prompt, ContractViolations) {
  auto t = support_task();
  t.shots.resize(3, Shot{"x", {"r"}, Answer::kSupport});
  EXPECT_THROW(build_prompt(t), ContractViolation);
  t = support_task();
  t.article = 5;
  EXPECT_THROW(build_prompt(t), ContractViolation);
}

TEST(Grid, ThreeHundredSixtyTasksWithoutLeakage) {
  const auto cases = grid_cases();
  const auto grid = build_grid(cases, grid_labels(cases));
  ASSERT_EQ(grid.size(), 360u);
  std::set<std::tuple<std::string, Source, Criterion, ShotMode>> keys;
  for (const auto& t : grid) {
    keys.insert({t.case_id, t.source, t.criterion, t.mode()});
    if (t.mode() == ShotMode::kZero) continue;
    ASSERT_EQ(t.shots.size(), 4u);
    const std::string p = build_prompt(t);
    // The judged case's rationales appear exactly once: in the list under
    // judgement, never inside an example block.
    const std::string examples = p.substr(0, p.find("Rationales are as follows"));
    for (Source s : {Source::kMarc, Source::kIsr, Source::kExpertA}) {
      const auto& own = std::find_if(cases.begin(), cases.end(), [&](const GridCase& c) {
                          return c.case_id == t.case_id;
                        })->rationales.at(s);
      for (const auto& r : own) EXPECT_EQ(examples.find(r), std::string::npos) << t.case_id;
    }
    for (const auto& shot : t.shots) {
      EXPECT_NE(shot.case_id, t.case_id);
      const auto& sc = *std::find_if(cases.begin(), cases.end(),
                                     [&](const GridCase& c) { return c.case_id == shot.case_id; });
      EXPECT_EQ(sc.article, t.article);
    }
  }
  EXPECT_EQ(keys.size(), 360u);
}

TEST(Parse, MandatedFormat) {
  const auto v = parse_verdict("**Answer:** Support\n**Confidence:** High\n**Explanation:** It fits.",
                               Criterion::kSupport);
  ASSERT_TRUE(v.parsed);
  EXPECT_EQ(v.answer, Answer::kSupport);
  EXPECT_EQ(v.confidence, Confidence::kHigh);
  EXPECT_EQ(v.explanation, "It fits.");
}

TEST(Parse, CaseAndLayoutTolerant) {
  const auto v = parse_verdict("answer: do not support / confidence: low / explanation: weak",
                               Criterion::kSupport);
  ASSERT_TRUE(v.parsed);
  EXPECT_EQ(v.answer, Answer::kDoNotSupport);
  EXPECT_EQ(v.confidence, Confidence::kLow);
  const auto s = parse_verdict("  **ANSWER**:   Insufficient  \n**Confidence**: Medium", Criterion::kSufficiency);
  ASSERT_TRUE(s.parsed);
  EXPECT_EQ(s.answer, Answer::kInsufficient);
  EXPECT_EQ(s.confidence, Confidence::kMedium);
}

TEST(Parse, Failures) {
  EXPECT_FALSE(parse_verdict("The rationales are interesting.", Criterion::kSupport).parsed);
  // An answer from the other criterion's set is not accepted.
  EXPECT_FALSE(parse_verdict("**Answer:** Sufficient", Criterion::kSupport).parsed);
  const auto v = parse_verdict("nonsense", Criterion::kSufficiency);
  EXPECT_EQ(v.raw_response, "nonsense");
}

TEST(Vote, TwoOfThree) {
  PanelResult r;
  for (auto [a, t] : {std::pair{Answer::kSupport, 0.05}, {Answer::kSupport, 0.5}, {Answer::kDoNotSupport, 1.0}}) {
    Verdict v;
    v.parsed = true;
    v.answer = a;
    v.temperature = t;
    v.confidence = Confidence::kMedium;
    r.verdicts.push_back(v);
  }
  vote(r);
  EXPECT_EQ(r.majority, Answer::kSupport);
  EXPECT_EQ(r.dissent, 1);
  EXPECT_EQ(r.median_confidence, Confidence::kMedium);
}

TEST(Vote, AllUnparsedIsUnavailable) {
  PanelResult r;
  r.verdicts.resize(3);
  vote(r);
  EXPECT_TRUE(r.unavailable());
}

TEST(Vote, TieAfterParseFailureGoesToLowestTemperature) {
  PanelResult r;
  Verdict a, b, c;
  a.parsed = true;
  a.answer = Answer::kInsufficient;
  a.temperature = 1.0;
  b.parsed = true;
  b.answer = Answer::kSufficient;
  b.temperature = 0.5;
  r.verdicts = {a, b, c};
  vote(r);
  EXPECT_EQ(r.majority, Answer::kSufficient);
  EXPECT_EQ(r.dissent, 1);
}

TEST(Vote, ThreeBinaryVerdictsNeverTie) {
  for (int mask = 0; mask < 8; ++mask) {
    PanelResult r;
    for (int k = 0; k < 3; ++k) {
      Verdict v;
      v.parsed = true;
      v.answer = (mask >> k) & 1 ? Answer::kSupport : Answer::kDoNotSupport;
      v.temperature = 0.1 * k;
      r.verdicts.push_back(v);
    }
    vote(r);
    ASSERT_TRUE(r.majority.has_value());
    EXPECT_LE(r.dissent, 1);
  }
}

TEST(Panel, RetriesUnparseableResponsesThenExcludes) {
  std::atomic<int> calls{0};
  FunctionClient client("j", [&](const std::string&, double t, int attempt) {
    ++calls;
    if (t > 0.9) return std::string("no idea");
    if (t > 0.4 && attempt < 2) return std::string("still thinking");
    return response("Do Not Support", "Low");
  });
  const auto results = run_panel({support_task()}, client);
  ASSERT_EQ(results.size(), 1u);
  const auto& r = results[0];
  ASSERT_EQ(r.verdicts.size(), 3u);
  EXPECT_EQ(r.verdicts[0].attempts, 1);
  EXPECT_EQ(r.verdicts[1].attempts, 3);
  EXPECT_TRUE(r.verdicts[1].parsed);
  EXPECT_EQ(r.verdicts[2].attempts, 3);
  EXPECT_FALSE(r.verdicts[2].parsed);
  EXPECT_EQ(r.majority, Answer::kDoNotSupport);
  EXPECT_EQ(calls.load(), 1 + 3 + 3);
  EXPECT_EQ(r.judge_id, "j");
  EXPECT_DOUBLE_EQ(r.verdicts[2].temperature, 1.0);
}

TEST(Panel, TransportFailuresMarkTheTaskUnavailable) {
  FunctionClient client("down", [](const std::string&, double, int) -> std::string {
    throw HarnessError("connection refused");
  });
  const auto results = run_panel({support_task(), support_task()}, client);
  for (const auto& r : results) {
    EXPECT_TRUE(r.unavailable());
    for (const auto& v : r.verdicts) EXPECT_NE(v.error.find("connection refused"), std::string::npos);
  }
}

TEST(Panel, CachedReplayReproducesResults) {
  testkit::TempDir dir("cache");
  const auto cases = grid_cases();
  auto grid = build_grid(cases, grid_labels(cases));
  grid.resize(40);
  std::mutex mu;
  std::map<std::string, int> seen;
  auto live = std::make_shared<FunctionClient>("llm", [&](const std::string& prompt, double t, int attempt) {
    std::lock_guard lock(mu);
    const int k = seen[prompt]++;
    if (attempt == 0 && k % 5 == 4) return std::string("garbled");
    const bool support = prompt.find("Support / Do Not Support") != std::string::npos;
    const bool yes = (std::hash<std::string>{}(prompt) + static_cast<std::size_t>(t * 100)) % 2;
    return response(support ? (yes ? "Support" : "Do Not Support") : (yes ? "Sufficient" : "Insufficient"),
                    yes ? "High" : "Low");
  });
  CachingClient recording(dir / "cache", "llm", live);
  const auto first = run_panel(grid, recording);
  CachingClient replay(dir / "cache", "llm");
  const auto second = run_panel(grid, replay);
  ASSERT_EQ(first.size(), second.size());
  testkit::TempDir out("panel");
  write_panel_results(first, out / "a.jsonl");
  write_panel_results(second, out / "b.jsonl");
  const auto a = read_panel_results(out / "a.jsonl");
  const auto b = read_panel_results(out / "b.jsonl");
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].key(), second[i].key());
    EXPECT_EQ(first[i].majority, second[i].majority);
    EXPECT_EQ(first[i].dissent, second[i].dissent);
    for (std::size_t k = 0; k < first[i].verdicts.size(); ++k)
      EXPECT_EQ(first[i].verdicts[k].raw_response, second[i].verdicts[k].raw_response);
    EXPECT_EQ(a[i].majority, b[i].majority);
    EXPECT_EQ(a[i].key(), first[i].key());
  }
  CachingClient empty(dir / "other", "llm");
  EXPECT_THROW(empty.complete("never seen", 0.5, 0), HarnessError);
}

TEST(Panel, ConcurrentRecordingOfIdenticalPrompts) {
  testkit::TempDir dir("cache_race");
  auto live = std::make_shared<FunctionClient>("llm", [](const std::string&, double, int) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    return response("Support", "High");
  });
  CachingClient recording(dir / "cache", "llm", live);
  const std::vector<JudgeTask> same(32, support_task());
  const auto results = run_panel(same, recording);
  for (const auto& r : results) EXPECT_EQ(r.majority, Answer::kSupport);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "cache")) {
    EXPECT_EQ(e.path().extension(), ".json") << e.path();
    ++files;
  }
  EXPECT_EQ(files, 3u);
}

TEST(Panel, UnexpectedClientErrorsReachTheCaller) {
  FunctionClient client("broken", [](const std::string&, double, int) -> std::string {
    throw std::runtime_error("disk full");
  });
  EXPECT_THROW(run_panel(std::vector<JudgeTask>(10, support_task()), client), std::runtime_error);
}

TEST(Tasks, JsonLinesRoundTrip) {
  const auto cases = grid_cases();
  const auto grid = build_grid(cases, grid_labels(cases));
  testkit::TempDir dir("tasks");
  write_tasks(grid, dir / "tasks.jsonl");
  const auto back = read_tasks(dir / "tasks.jsonl");
  ASSERT_EQ(back.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(build_prompt(back[i]), build_prompt(grid[i]));
}

TEST(Names, RoundTripAndTableSpellings) {
  EXPECT_EQ(answer_from_string("Not support"), Answer::kDoNotSupport);
  EXPECT_EQ(answer_from_string("Do Not Support"), Answer::kDoNotSupport);
  EXPECT_EQ(to_string(Answer::kDoNotSupport), "Do Not Support");
  EXPECT_EQ(shot_mode_from_string("single"), ShotMode::kZero);
  EXPECT_EQ(shot_mode_from_string("few"), ShotMode::kFew);
  EXPECT_EQ(binary(Answer::kSufficient), 1);
  EXPECT_EQ(binary(Answer::kDoNotSupport), 0);
  for (Source s : {Source::kMarc, Source::kIsr, Source::kExpertA}) EXPECT_EQ(source_from_string(to_string(s)), s);
}

TEST(HttpClient, PostsChatCompletionAndReadsTheReply) {
  httplib::Server server;
  std::mutex mu;
  nlohmann::json last_body;
  std::string last_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    last_body = nlohmann::json::parse(req.body);
    last_auth = req.get_header_value("Authorization");
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", response("Support", "High")}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("INTEVAL_TEST_JUDGE_TOKEN", "sekrit", 1);
  Endpoint ep;
  ep.id = "local";
  ep.base_url = fmt::format("http://127.0.0.1:{}", port);
  ep.model = "tiny-judge";
  ep.auth_env = "INTEVAL_TEST_JUDGE_TOKEN";
  HttpChatClient client(ep);
  const auto results = run_panel({support_task()}, client);
  EXPECT_EQ(results[0].majority, Answer::kSupport);
  {
    std::lock_guard lock(mu);
    EXPECT_EQ(last_body["model"], "tiny-judge");
    EXPECT_EQ(last_body["max_tokens"], 512);
    EXPECT_EQ(last_body["messages"][0]["role"], "user");
    EXPECT_EQ(last_body["messages"][0]["content"], build_prompt(support_task()));
    EXPECT_DOUBLE_EQ(last_body["temperature"].get<double>(), 1.0);
    EXPECT_EQ(last_auth, "Bearer sekrit");
  }
  ep.path = "/broken";
  HttpChatClient broken(ep);
  EXPECT_THROW(broken.complete("x", 0.5, 0), HarnessError);
  server.stop();
  th.join();
}

TEST(HttpClient, EndpointConfigFile) {
  testkit::TempDir dir("judges");
  std::ofstream(dir / "judges.json") << R"({"judges": [
    {"id": "saullm", "base_url": "http://h:1", "model": "Saul-7B", "auth_env": "TOK"},
    {"id": "llama", "base_url": "http://h:2", "model": "Llama-3", "max_tokens": 256}]})";
  const auto eps = load_endpoints(dir / "judges.json");
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].auth_env, "TOK");
  EXPECT_EQ(eps[1].max_tokens, 256);
  EXPECT_EQ(eps[0].max_tokens, 512);
  EXPECT_THROW(load_endpoints(dir / "missing.json"), ConfigError);
}
