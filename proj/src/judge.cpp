#include "inteval/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "inteval/error.hpp"
#include "inteval/kernels.hpp"

#ifndef INTEVAL_DATA_DIR
#define INTEVAL_DATA_DIR "data"
#endif

namespace inteval::judge {

using json = nlohmann::json;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kMarc: return "MARC";
    case Source::kIsr: return "ISR";
    case Source::kExpertA: return "EXPERT_A";
  }
  return "?";
}

std::string_view to_string(Criterion c) {
  return c == Criterion::kSupport ? "support" : "sufficiency";
}

std::string_view to_string(ShotMode m) { return m == ShotMode::kZero ? "zero" : "few"; }

std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::kSupport: return "Support";
    case Answer::kDoNotSupport: return "Do Not Support";
    case Answer::kSufficient: return "Sufficient";
    case Answer::kInsufficient: return "Insufficient";
  }
  return "?";
}

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::kHigh: return "High";
    case Confidence::kMedium: return "Medium";
    case Confidence::kLow: return "Low";
  }
  return "?";
}

Source source_from_string(std::string_view s) {
  const std::string u = upper(s);
  if (u == "MARC") return Source::kMarc;
  if (u == "ISR") return Source::kIsr;
  if (u == "EXPERT_A" || u == "EXPERT A" || u == "EXPERT") return Source::kExpertA;
  throw ValidationError("unknown rationale source '" + std::string(s) + "'");
}

Criterion criterion_from_string(std::string_view s) {
  const std::string c = collapse(s);
  if (c == "support") return Criterion::kSupport;
  if (c == "sufficiency") return Criterion::kSufficiency;
  throw ValidationError("unknown criterion '" + std::string(s) + "'");
}

ShotMode shot_mode_from_string(std::string_view s) {
  const std::string c = collapse(s);
  if (c == "zero" || c == "single" || c == "single shot") return ShotMode::kZero;
  if (c == "few" || c == "few shot") return ShotMode::kFew;
  throw ValidationError("unknown shot mode '" + std::string(s) + "'");
}

Answer answer_from_string(std::string_view s) {
  const std::string c = collapse(s);
  if (c == "support" || c == "supports") return Answer::kSupport;
  if (c == "do not support" || c == "not support" || c == "dns" || c == "does not support")
    return Answer::kDoNotSupport;
  if (c == "sufficient") return Answer::kSufficient;
  if (c == "insufficient" || c == "not sufficient") return Answer::kInsufficient;
  throw ValidationError("unknown answer '" + std::string(s) + "'");
}

Confidence confidence_from_string(std::string_view s) {
  const std::string c = collapse(s);
  if (c == "high" || c == "h") return Confidence::kHigh;
  if (c == "medium" || c == "m") return Confidence::kMedium;
  if (c == "low" || c == "l") return Confidence::kLow;
  throw ValidationError("unknown confidence '" + std::string(s) + "'");
}

Criterion criterion_of(Answer a) {
  return a == Answer::kSupport || a == Answer::kDoNotSupport ? Criterion::kSupport
                                                             : Criterion::kSufficiency;
}

int binary(Answer a) { return a == Answer::kSupport || a == Answer::kSufficient ? 1 : 0; }

// --- prompts -----------------------------------------------------------------

namespace {

std::filesystem::path g_data_dir = INTEVAL_DATA_DIR;
std::mutex g_article_mutex;
std::map<int, std::string> g_articles;

constexpr std::string_view kSupportIntro =
    "You are a legal expert on European Court of Human Rights decisions. Given the rationales "
    "and article(s), decide whether they support or do not support the existence of a "
    "violation. Also output your own confidence as High, Medium, or Low.";

constexpr std::string_view kSufficiencyIntro =
    "You are a legal expert on European Court of Human Rights decisions. Given the rationales "
    "and article(s), decide whether they are sufficient or not to decide on the existence of a "
    "violation of the given article. Also output your own confidence as High, Medium, or Low.";

constexpr std::string_view kConfidenceLevels =
    "Confidence levels are defined as follows:\n"
    "- High: You are very certain of your decision; the rationales leave little room for doubt, "
    "and new information is unlikely to change it.\n"
    "- Medium: You are moderately certain; the rationales justify your decision but have gaps, "
    "so new information might change it.\n"
    "- Low: weak or fragile support; You are uncertain; the rationales weakly support your "
    "decision, and even small new/contradictory info could flip it.";

constexpr std::string_view kFormatLead =
    "Respond **EXACTLY** in this format, nothing else based on the instructions you will be "
    "provided with:";

constexpr std::string_view kExplanationLine =
    "**Explanation:** [Exactly 3 sentences explaining your reasoning, where the last sentence "
    "includes your answer and confidence level.]";

std::string rationale_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "; ";
    out += items[i];
  }
  return out + "]";
}

}  // namespace

void set_data_dir(const std::filesystem::path& dir) {
  std::lock_guard lock(g_article_mutex);
  g_data_dir = dir;
  g_articles.clear();
}

const std::string& article_text(int article) {
  INTEVAL_EXPECT(article == 6 || article == 8, "judge prompts cover Articles 6 and 8 only");
  std::lock_guard lock(g_article_mutex);
  auto it = g_articles.find(article);
  if (it != g_articles.end()) return it->second;
  const auto path = g_data_dir / "articles" / fmt::format("article{}.txt", article);
  std::ifstream in(path);
  if (!in) throw ConfigError("missing article text " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return g_articles.emplace(article, std::move(text)).first->second;
}

std::string build_prompt(const JudgeTask& task) {
  INTEVAL_EXPECT(task.shots.empty() || task.shots.size() == 4,
                 "few-shot prompts take exactly four examples");
  const bool support = task.criterion == Criterion::kSupport;
  std::string p;
  p += support ? kSupportIntro : kSufficiencyIntro;
  p += "\n\n";
  p += kConfidenceLevels;
  p += "\n\n";
  p += article_text(task.article);
  p += "\n\n";
  for (std::size_t i = 0; i < task.shots.size(); ++i) {
    const Shot& s = task.shots[i];
    INTEVAL_EXPECT(criterion_of(s.answer) == task.criterion, "example answer does not fit criterion");
    p += fmt::format("Example {}: {},\n\nAnswer: {}\n\n", i + 1, rationale_list(s.rationales),
                     to_string(s.answer));
  }
  p += "Rationales are as follows: " + rationale_list(task.rationale_texts) + "\n\n";
  p += kFormatLead;
  p += "\n\n";
  p += support ? "**Answer:** Support / Do Not Support" : "**Answer:** Sufficient / Insufficient";
  p += "\n\n**Confidence:** High / Medium / Low\n\n";
  p += kExplanationLine;
  p += "\n";
  return p;
}

// --- parsing and voting ------------------------------------------------------

Verdict parse_verdict(const std::string& raw, Criterion criterion) {
  Verdict v;
  v.raw_response = raw;
  std::string text;
  for (char c : raw)
    if (c != '*') text += c;

  static const std::regex kAnswer(
      R"(answer\s*:\s*(do\s+not\s+support|does\s+not\s+support|not\s+support|support|insufficient|sufficient))",
      std::regex::icase);
  static const std::regex kConfidence(R"(confidence\s*:\s*(high|medium|low))", std::regex::icase);
  static const std::regex kExplanation(R"(explanation\s*:\s*)", std::regex::icase);

  std::smatch m;
  if (!std::regex_search(text, m, kAnswer)) return v;
  const Answer a = answer_from_string(m[1].str());
  if (criterion_of(a) != criterion) return v;
  v.answer = a;
  if (std::regex_search(text, m, kConfidence)) v.confidence = confidence_from_string(m[1].str());
  if (std::regex_search(text, m, kExplanation)) {
    std::string e = m.suffix().str();
    const auto last = e.find_last_not_of(" \t\r\n");
    v.explanation = last == std::string::npos ? "" : e.substr(0, last + 1);
  }
  v.parsed = true;
  return v;
}

std::string PanelResult::key() const {
  return fmt::format("{}|{}|{}|{}|{}", case_id, to_string(source), to_string(criterion),
                     judge_id, to_string(mode));
}

void vote(PanelResult& r) {
  r.majority.reset();
  r.median_confidence.reset();
  r.dissent = 0;
  std::map<Answer, int> counts;
  const Verdict* lowest = nullptr;
  std::vector<Confidence> confidences;
  for (const auto& v : r.verdicts) {
    if (!v.parsed) continue;
    ++counts[*v.answer];
    if (!lowest || v.temperature < lowest->temperature) lowest = &v;
    if (v.confidence) confidences.push_back(*v.confidence);
  }
  if (counts.empty()) return;
  int best = 0;
  for (const auto& [a, c] : counts) best = std::max(best, c);
  int winners = 0;
  for (const auto& [a, c] : counts) {
    if (c == best) {
      ++winners;
      r.majority = a;
    }
  }
  if (winners > 1) r.majority = lowest->answer;
  for (const auto& [a, c] : counts)
    if (a != *r.majority) r.dissent += c;
  if (!confidences.empty()) {
    std::sort(confidences.begin(), confidences.end());
    r.median_confidence = confidences[(confidences.size() - 1) / 2];
  }
}

// --- clients -----------------------------------------------------------------

std::vector<Endpoint> load_endpoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open judge config " + path.string());
  const json j = json::parse(in);
  std::vector<Endpoint> out;
  for (const auto& e : j.at("judges")) {
    Endpoint ep;
    ep.id = e.at("id").get<std::string>();
    ep.base_url = e.at("base_url").get<std::string>();
    ep.model = e.at("model").get<std::string>();
    ep.auth_env = e.value("auth_env", "");
    ep.path = e.value("path", ep.path);
    ep.max_tokens = e.value("max_tokens", ep.max_tokens);
    ep.timeout_seconds = e.value("timeout_seconds", ep.timeout_seconds);
    out.push_back(std::move(ep));
  }
  return out;
}

HttpChatClient::HttpChatClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpChatClient::complete(const std::string& prompt, double temperature, int) {
  httplib::Client cli(endpoint_.base_url);
  cli.set_read_timeout(endpoint_.timeout_seconds, 0);
  cli.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!endpoint_.auth_env.empty()) {
    if (const char* token = std::getenv(endpoint_.auth_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const json body = {{"model", endpoint_.model},
                     {"temperature", temperature},
                     {"max_tokens", endpoint_.max_tokens},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  auto res = cli.Post(endpoint_.path, headers, body.dump(), "application/json");
  if (!res)
    throw HarnessError(fmt::format("judge {}: request failed ({})", endpoint_.id,
                                   httplib::to_string(res.error())));
  if (res->status != 200)
    throw HarnessError(fmt::format("judge {}: HTTP {}", endpoint_.id, res->status));
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw HarnessError(fmt::format("judge {}: malformed reply: {}", endpoint_.id, e.what()));
  }
}

CachingClient::CachingClient(std::filesystem::path dir, std::string judge_id,
                             std::shared_ptr<ChatClient> inner)
    : dir_(std::move(dir)), judge_id_(std::move(judge_id)), inner_(std::move(inner)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path CachingClient::file_for(const std::string& prompt, double temperature,
                                              int attempt) const {
  const std::string key = fmt::format("{}\n{:.4f}\n{}\n{}", judge_id_, temperature, attempt, prompt);
  return dir_ / fmt::format("{:016x}.json", hash_string(key.data(), key.size()));
}

std::string CachingClient::complete(const std::string& prompt, double temperature, int attempt) {
  const auto path = file_for(prompt, temperature, attempt);
  if (std::ifstream in(path); in) {
    const json j = json::parse(in);
    if (j.at("prompt").get<std::string>() == prompt) return j.at("response").get<std::string>();
  }
  if (!inner_)
    throw HarnessError(fmt::format("judge {}: no cached response at T={} attempt {}", judge_id_,
                                   temperature, attempt));
  std::string response = inner_->complete(prompt, temperature, attempt);
  const json j = {{"judge", judge_id_},
                  {"temperature", temperature},
                  {"attempt", attempt},
                  {"prompt", prompt},
                  {"response", response}};
  // Two tasks can render the same prompt, so concurrent writers of one key
  // each get their own temporary file; the rename is atomic.
  const auto tmp = fmt::format("{}.{}.tmp", path.string(), std::hash<std::thread::id>{}(std::this_thread::get_id()));
  std::ofstream(tmp) << j.dump() << '\n';
  std::filesystem::rename(tmp, path);
  return response;
}

// --- panel -------------------------------------------------------------------

std::vector<PanelResult> run_panel(const std::vector<JudgeTask>& tasks, ChatClient& client,
                                   const PanelConfig& cfg) {
  std::vector<PanelResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        const JudgeTask& t = tasks[i];
        const std::string prompt = build_prompt(t);
        PanelResult& r = results[i];
        r.case_id = t.case_id;
        r.source = t.source;
        r.criterion = t.criterion;
        r.mode = t.mode();
        r.judge_id = client.id();
        for (double temp : cfg.temperatures) {
          Verdict v;
          for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            std::string raw;
            try {
              raw = client.complete(prompt, temp, attempt);
            } catch (const HarnessError& e) {
              v = Verdict{};
              v.error = e.what();
              v.attempts = attempt + 1;
              spdlog::warn("{} T={} attempt {}: {}", r.key(), temp, attempt, e.what());
              continue;
            }
            v = parse_verdict(raw, t.criterion);
            v.attempts = attempt + 1;
            if (v.parsed) break;
            spdlog::info("{} T={} attempt {}: unparseable response", r.key(), temp, attempt);
          }
          v.temperature = temp;
          v.judge_id = client.id();
          r.verdicts.push_back(std::move(v));
        }
        vote(r);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = tasks.size();
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.fan_out, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return results;
}

// --- grid --------------------------------------------------------------------

std::vector<Shot> select_shots(const std::vector<GridCase>& cases, std::size_t task_case,
                               Source source, Criterion criterion, const ShotLabels& labels) {
  INTEVAL_EXPECT(task_case < cases.size(), "case index out of range");
  const GridCase& target = cases[task_case];
  std::vector<Shot> shots;
  for (std::size_t k = 1; k < cases.size() && shots.size() < 4; ++k) {
    const GridCase& c = cases[(task_case + k) % cases.size()];
    if (c.article != target.article || c.case_id == target.case_id) continue;
    auto label = labels.find({c.case_id, source, criterion});
    auto rats = c.rationales.find(source);
    if (label == labels.end() || rats == c.rationales.end()) continue;
    shots.push_back({c.case_id, rats->second, label->second});
  }
  if (shots.size() != 4)
    throw ValidationError(fmt::format("only {} same-article examples available for {}",
                                      shots.size(), target.case_id));
  return shots;
}

std::vector<JudgeTask> build_grid(const std::vector<GridCase>& cases, const ShotLabels& labels) {
  std::vector<JudgeTask> tasks;
  for (ShotMode mode : {ShotMode::kZero, ShotMode::kFew}) {
    for (Criterion criterion : {Criterion::kSupport, Criterion::kSufficiency}) {
      for (std::size_t i = 0; i < cases.size(); ++i) {
        for (const auto& [source, rats] : cases[i].rationales) {
          JudgeTask t;
          t.case_id = cases[i].case_id;
          t.source = source;
          t.criterion = criterion;
          t.article = cases[i].article;
          t.rationale_texts = rats;
          if (mode == ShotMode::kFew) t.shots = select_shots(cases, i, source, criterion, labels);
          tasks.push_back(std::move(t));
        }
      }
    }
  }
  return tasks;
}

// --- persistence -------------------------------------------------------------

namespace {

json verdict_json(const Verdict& v) {
  json j = {{"parsed", v.parsed},       {"temperature", v.temperature},
            {"judge_id", v.judge_id},   {"raw_response", v.raw_response},
            {"attempts", v.attempts},   {"explanation", v.explanation}};
  j["answer"] = v.answer ? json(to_string(*v.answer)) : json(nullptr);
  j["confidence"] = v.confidence ? json(to_string(*v.confidence)) : json(nullptr);
  if (!v.error.empty()) j["error"] = v.error;
  return j;
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.parsed = j.at("parsed").get<bool>();
  v.temperature = j.at("temperature").get<double>();
  v.judge_id = j.at("judge_id").get<std::string>();
  v.raw_response = j.at("raw_response").get<std::string>();
  v.attempts = j.at("attempts").get<int>();
  v.explanation = j.value("explanation", "");
  if (!j.at("answer").is_null()) v.answer = answer_from_string(j["answer"].get<std::string>());
  if (!j.at("confidence").is_null())
    v.confidence = confidence_from_string(j["confidence"].get<std::string>());
  v.error = j.value("error", "");
  return v;
}

}  // namespace

void write_tasks(const std::vector<JudgeTask>& tasks, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& t : tasks) {
    json shots = json::array();
    for (const auto& s : t.shots)
      shots.push_back({{"case_id", s.case_id}, {"rationales", s.rationales}, {"answer", to_string(s.answer)}});
    out << json{{"case_id", t.case_id},
                {"source", to_string(t.source)},
                {"criterion", to_string(t.criterion)},
                {"article", t.article},
                {"rationales", t.rationale_texts},
                {"shots", shots}}
               .dump()
        << '\n';
  }
}

std::vector<JudgeTask> read_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file " + path.string());
  std::vector<JudgeTask> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    JudgeTask t;
    t.case_id = j.at("case_id").get<std::string>();
    t.source = source_from_string(j.at("source").get<std::string>());
    t.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    t.article = j.at("article").get<int>();
    t.rationale_texts = j.at("rationales").get<std::vector<std::string>>();
    for (const auto& s : j.value("shots", json::array()))
      t.shots.push_back({s.at("case_id").get<std::string>(),
                         s.at("rationales").get<std::vector<std::string>>(),
                         answer_from_string(s.at("answer").get<std::string>())});
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void write_panel_results(const std::vector<PanelResult>& results,
                         const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& r : results) {
    json verdicts = json::array();
    for (const auto& v : r.verdicts) verdicts.push_back(verdict_json(v));
    json j = {{"case_id", r.case_id},     {"source", to_string(r.source)},
              {"criterion", to_string(r.criterion)}, {"mode", to_string(r.mode)},
              {"judge_id", r.judge_id},   {"verdicts", verdicts},
              {"dissent", r.dissent}};
    j["majority"] = r.majority ? json(to_string(*r.majority)) : json("UNAVAILABLE");
    j["median_confidence"] =
        r.median_confidence ? json(to_string(*r.median_confidence)) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<PanelResult> read_panel_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open panel results " + path.string());
  std::vector<PanelResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    PanelResult r;
    r.case_id = j.at("case_id").get<std::string>();
    r.source = source_from_string(j.at("source").get<std::string>());
    r.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    r.mode = shot_mode_from_string(j.at("mode").get<std::string>());
    r.judge_id = j.at("judge_id").get<std::string>();
    for (const auto& v : j.at("verdicts")) r.verdicts.push_back(verdict_from_json(v));
    vote(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace inteval::judge
