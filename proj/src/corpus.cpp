#include "inteval/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "inteval/error.hpp"
#include "inteval/tokenizer.hpp"

namespace inteval::corpus {

using json = nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string_view effect_name(RuleEffect e) {
  switch (e) {
    case RuleEffect::kPositive: return "POSITIVE";
    case RuleEffect::kNegative: return "NEGATIVE";
    case RuleEffect::kExclude: return "EXCLUDE";
    case RuleEffect::kIgnoreArticle: return "IGNORE_ARTICLE";
    case RuleEffect::kIgnorePhrase: return "IGNORE_PHRASE";
  }
  return "?";
}

RuleEffect effect_from_name(const std::string& s) {
  for (RuleEffect e : {RuleEffect::kPositive, RuleEffect::kNegative, RuleEffect::kExclude,
                       RuleEffect::kIgnoreArticle, RuleEffect::kIgnorePhrase})
    if (effect_name(e) == s) return e;
  throw ValidationError("unknown rule effect '" + s + "'");
}

// Splits a conclusion on ';' and newlines outside parentheses. HUDOC
// conclusions nest sub-headings such as "(Article 6-1 - Access to court; ...)"
// inside the clause they qualify.
std::vector<std::string> split_clauses(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')' && depth > 0) --depth;
    if ((c == ';' || c == '\n') && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

void skip_spaces(const std::string& s, std::size_t& i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

bool read_number(const std::string& s, std::size_t& i, std::string& out) {
  std::size_t j = i;
  while (j < s.size() && is_digit(s[j])) ++j;
  if (j == i) return false;
  out = s.substr(i, j - i);
  i = j;
  return true;
}

// Consumes paragraph qualifiers after an article number: "-1", "§ 1", "§§ 1 and 3"
// is not attempted; a single paragraph reference is enough for conclusions.
void skip_paragraph(const std::string& s, std::size_t& i) {
  std::size_t j = i;
  skip_spaces(s, j);
  if (j + 1 < s.size() && s[j] == '-' && is_digit(s[j + 1])) {
    ++j;
  } else if (s.compare(j, 2, "\xC2\xA7") == 0) {
    j += 2;
    skip_spaces(s, j);
  } else {
    return;
  }
  std::string dummy;
  if (read_number(s, j, dummy)) i = j;
}

}  // namespace

std::vector<FilterRule> validate_rules(std::vector<FilterRule> rules) {
  std::set<int> priorities;
  for (const auto& r : rules) {
    if (r.phrase.empty()) throw ValidationError("filter rule with empty phrase");
    if (!priorities.insert(r.priority).second)
      throw ValidationError(fmt::format("duplicate rule priority {}", r.priority));
    if (r.effect == RuleEffect::kExclude && !r.reason)
      throw ValidationError("exclude rule '" + r.phrase + "' has no exclusion reason");
  }
  std::sort(rules.begin(), rules.end(),
            [](const FilterRule& a, const FilterRule& b) { return a.priority < b.priority; });
  for (auto& r : rules) r.phrase = lower(r.phrase);
  return rules;
}

std::vector<FilterRule> default_rules() {
  using E = RuleEffect;
  using R = ExclusionReason;
  return validate_rules({
      {"request to strike the application out of the list rejected", E::kIgnorePhrase, 1, {}},
      {"request for striking out rejected", E::kIgnorePhrase, 2, {}},
      {"inadmissible", E::kExclude, 10, R::kInadmissible},
      {"struck out of the list", E::kExclude, 11, R::kStruckOut},
      {"lack of jurisdiction", E::kExclude, 12, R::kLackOfJurisdiction},
      {"preliminary objection allowed", E::kExclude, 13, R::kPreliminaryObjectionAllowed},
      {"preliminary objection partially allowed", E::kExclude, 14,
       R::kPreliminaryObjectionAllowed},
      {"preliminary objections allowed", E::kExclude, 15, R::kPreliminaryObjectionAllowed},
      {"not necessary to examine", E::kIgnoreArticle, 20, {}},
      {"no violation", E::kNegative, 30, {}},
      {"finding of violation sufficient", E::kPositive, 40, {}},
      {"violation", E::kPositive, 41, {}},
      {"award", E::kPositive, 42, {}},
  });
}

std::vector<FilterRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rule file " + path.string());
  const json doc = json::parse(in);
  std::vector<FilterRule> rules;
  for (const auto& j : doc.at("rules")) {
    FilterRule r;
    r.phrase = j.at("phrase").get<std::string>();
    r.effect = effect_from_name(j.at("effect").get<std::string>());
    r.priority = j.at("priority").get<int>();
    if (j.contains("reason")) r.reason = exclusion_reason_from_string(j["reason"].get<std::string>());
    rules.push_back(std::move(r));
  }
  return validate_rules(std::move(rules));
}

void save_rules(const std::vector<FilterRule>& rules, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& r : rules) {
    json j = {{"phrase", r.phrase}, {"effect", effect_name(r.effect)}, {"priority", r.priority}};
    if (r.reason) j["reason"] = to_string(*r.reason);
    arr.push_back(std::move(j));
  }
  std::ofstream(path) << json{{"rules", arr}}.dump(2) << '\n';
}

bool is_known_article(const std::string& id) {
  static const std::map<int, int> kProtocolArticles = {{1, 3}, {4, 4}, {6, 4},
                                                      {7, 5}, {12, 1}, {13, 1}};
  static const std::regex kProtocol(R"(P(\d+)-(\d+))");
  std::smatch m;
  if (std::regex_match(id, m, kProtocol)) {
    auto it = kProtocolArticles.find(std::stoi(m[1]));
    const int art = std::stoi(m[2]);
    return it != kProtocolArticles.end() && art >= 1 && art <= it->second;
  }
  if (id.empty() || id.size() > 2 || !std::all_of(id.begin(), id.end(), is_digit)) return false;
  const int n = std::stoi(id);
  return n >= 1 && n <= 59;
}

std::vector<std::string> parse_article_ids(const std::string& clause) {
  std::string s = lower(clause);
  std::vector<std::string> ids;

  static const std::regex kOfProtocol(R"(article\s+(\d+)\s+of\s+protocol\s+(?:no\.?\s*)?(\d+))");
  static const std::regex kShortProtocol(R"(\bp(\d+)-(\d+))");
  for (const std::regex* re : {&kOfProtocol, &kShortProtocol}) {
    std::smatch m;
    std::string rest = s;
    std::string blanked;
    while (std::regex_search(rest, m, *re)) {
      const bool of_form = re == &kOfProtocol;
      ids.push_back(fmt::format("P{}-{}", of_form ? m[2].str() : m[1].str(),
                                of_form ? m[1].str() : m[2].str()));
      blanked += m.prefix().str() + std::string(static_cast<std::size_t>(m.length()), ' ');
      rest = m.suffix().str();
    }
    s = blanked + rest;
  }

  std::size_t pos = 0;
  while ((pos = s.find("article", pos)) != std::string::npos) {
    pos += 7;
    if (pos < s.size() && s[pos] == 's') ++pos;
    std::size_t i = pos;
    while (true) {
      skip_spaces(s, i);
      std::string num;
      if (!read_number(s, i, num)) break;
      ids.push_back(num);
      skip_paragraph(s, i);
      std::size_t j = i;
      skip_spaces(s, j);
      if (j < s.size() && (s[j] == '+' || s[j] == ',')) {
        i = j + 1;
      } else if (s.compare(j, 4, "and ") == 0) {
        i = j + 4;
      } else {
        break;
      }
    }
    pos = i;
  }

  std::vector<std::string> unique;
  for (auto& id : ids) {
    if (!is_known_article(id)) throw ValidationError("unknown article identifier '" + id + "'");
    if (std::find(unique.begin(), unique.end(), id) == unique.end()) unique.push_back(id);
  }
  return unique;
}

Label label_case(const CaseDocument& doc, const std::vector<FilterRule>& rules) {
  if (doc.conclusion.find_first_not_of(" \t\r\n") == std::string::npos)
    throw LabelingError("case " + doc.case_id + " has no conclusion text");

  bool positive = false;
  std::optional<ExclusionReason> exclusion;
  std::set<std::string> violated, not_violated, not_examined;

  for (const auto& [article, outcome] : doc.articles) {
    if (!is_known_article(article))
      throw ValidationError("case " + doc.case_id + ": unknown article '" + article + "'");
    if (outcome == Outcome::kViolated) violated.insert(article);
    if (outcome == Outcome::kNotViolated) not_violated.insert(article);
  }

  for (const std::string& raw : split_clauses(doc.conclusion)) {
    const std::string clause = lower(raw);
    const FilterRule* hit = nullptr;
    for (const auto& r : rules) {
      if (clause.find(r.phrase) != std::string::npos) {
        hit = &r;
        break;
      }
    }
    if (!hit) continue;
    switch (hit->effect) {
      case RuleEffect::kIgnorePhrase:
        break;
      case RuleEffect::kExclude:
        if (!exclusion) exclusion = hit->reason;
        break;
      case RuleEffect::kIgnoreArticle:
        for (auto& id : parse_article_ids(raw)) not_examined.insert(id);
        break;
      case RuleEffect::kNegative:
        for (auto& id : parse_article_ids(raw)) not_violated.insert(id);
        break;
      case RuleEffect::kPositive:
        positive = true;
        if (hit->phrase.find("violation") != std::string::npos)
          for (auto& id : parse_article_ids(raw)) violated.insert(id);
        break;
    }
  }

  if (exclusion) return Label::excluded(*exclusion);
  for (const auto& id : violated) {
    // Conflicts are judged per article; paragraphs are not distinguished.
    if (not_violated.count(id) && !not_examined.count(id))
      return Label::excluded(ExclusionReason::kSameArticleConflict);
  }
  return positive ? Label::violation() : Label::no_violation();
}

std::optional<Label> screen_document(const CaseDocument& doc) {
  if (lower(doc.language) != "en") return Label::excluded(ExclusionReason::kNonEnglish);
  const bool bad_date = !doc.decision_date || doc.decision_date->year < 1959 ||
                        doc.decision_date->year > 2100 || doc.decision_date->month < 1 ||
                        doc.decision_date->month > 12 || doc.decision_date->day < 1 ||
                        doc.decision_date->day > 31;
  if (doc.case_id.empty() || doc.facts.empty() || bad_date)
    return Label::excluded(ExclusionReason::kCorruptMetadata);
  for (const auto& [article, outcome] : doc.articles)
    if (!is_known_article(article)) return Label::excluded(ExclusionReason::kCorruptMetadata);
  return std::nullopt;
}

std::vector<Label> label_corpus(const std::vector<CaseDocument>& docs,
                                const std::vector<FilterRule>& rules, ExecutionPolicy policy) {
  std::vector<Label> labels(docs.size());
  for_each_index(docs.size(), policy, [&](std::size_t i) {
    if (auto screened = screen_document(docs[i])) {
      labels[i] = *screened;
    } else {
      labels[i] = label_case(docs[i], rules);
    }
  });
  return labels;
}

// --- balancing ---------------------------------------------------------------

namespace {

std::string article_group(const CaseDocument& doc) {
  const bool six = doc.articles.count("6") > 0;
  const bool eight = doc.articles.count("8") > 0;
  if (six && eight) return "6+8";
  if (six) return "6";
  if (eight) return "8";
  return "other";
}

int year_of(const CaseDocument& doc) { return doc.decision_date ? doc.decision_date->year : 0; }

// Largest-remainder apportionment of `total` over strata with sizes `sizes`.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
  std::size_t population = 0;
  for (auto s : sizes) population += s;
  std::vector<std::size_t> quota(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double exact = static_cast<double>(total) * static_cast<double>(sizes[i]) /
                         static_cast<double>(population);
    quota[i] = static_cast<std::size_t>(exact);
    assigned += quota[i];
    remainders.emplace_back(exact - static_cast<double>(quota[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const std::size_t i = remainders[k].second;
    if (quota[i] < sizes[i]) {
      ++quota[i];
      ++assigned;
    }
  }
  return quota;
}

template <class Key>
void check_marginals(const std::map<Key, double>& before, const std::map<Key, double>& after,
                     double tolerance, const std::string& what, std::vector<std::string>& warnings) {
  for (const auto& [key, share] : before) {
    const auto it = after.find(key);
    const double got = it == after.end() ? 0.0 : it->second;
    if (std::abs(got - share) > tolerance + 1e-9) {
      warnings.push_back(fmt::format("{} {} share {:.2f}% deviates from {:.2f}% by more than {}pp",
                                     what, key, got, share, tolerance));
    }
  }
}

}  // namespace

std::vector<std::string> CorpusSplit::all_ids() const {
  std::vector<std::string> out = train;
  out.insert(out.end(), dev.begin(), dev.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

std::map<std::string, double> article_shares(const std::vector<const CaseDocument*>& docs) {
  std::map<std::string, double> out;
  if (docs.empty()) return out;
  for (const auto* d : docs)
    for (const auto& [article, outcome] : d->articles) out[article] += 1.0;
  for (auto& [k, v] : out) v = 100.0 * v / static_cast<double>(docs.size());
  return out;
}

std::map<int, double> year_shares(const std::vector<const CaseDocument*>& docs) {
  std::map<int, double> out;
  if (docs.empty()) return out;
  for (const auto* d : docs) out[year_of(*d)] += 1.0;
  for (auto& [k, v] : out) v = 100.0 * v / static_cast<double>(docs.size());
  return out;
}

CorpusSplit balance_corpus(const std::vector<LabeledDoc>& labeled, const BalanceConfig& cfg) {
  std::vector<const CaseDocument*> pos, neg;
  for (const auto& ld : labeled) {
    if (ld.label == LabelValue::kExcluded)
      throw CorpusError("excluded document " + ld.doc->case_id + " passed to balance_corpus");
    (ld.label == LabelValue::kViolation ? pos : neg).push_back(ld.doc);
  }
  if (pos.empty() || neg.empty())
    throw CorpusError(fmt::format("cannot balance: {} positives, {} negatives", pos.size(),
                                  neg.size()));
  auto by_id = [](const CaseDocument* a, const CaseDocument* b) { return a->case_id < b->case_id; };
  std::sort(pos.begin(), pos.end(), by_id);
  std::sort(neg.begin(), neg.end(), by_id);

  CorpusSplit split;
  std::mt19937_64 rng(cfg.seed);
  const bool pos_majority = pos.size() > neg.size();
  std::vector<const CaseDocument*>& majority = pos_majority ? pos : neg;
  const std::vector<const CaseDocument*>& minority = pos_majority ? neg : pos;

  if (majority.size() > minority.size()) {
    std::map<std::pair<std::string, int>, std::vector<const CaseDocument*>> strata;
    for (const auto* d : majority) strata[{article_group(*d), year_of(*d)}].push_back(d);
    std::vector<std::size_t> sizes;
    for (const auto& [key, members] : strata) sizes.push_back(members.size());
    const auto quota = apportion(sizes, minority.size());

    std::vector<const CaseDocument*> kept;
    std::size_t k = 0;
    for (auto& [key, members] : strata) {
      std::shuffle(members.begin(), members.end(), rng);
      kept.insert(kept.end(), members.begin(), members.begin() + static_cast<long>(quota[k++]));
    }
    check_marginals(article_shares(majority), article_shares(kept), cfg.tolerance_pp, "article",
                    split.warnings);
    check_marginals(year_shares(majority), year_shares(kept), cfg.tolerance_pp, "year",
                    split.warnings);
    for (const auto& w : split.warnings) spdlog::warn("balance_corpus: {}", w);
    std::sort(kept.begin(), kept.end(), by_id);
    majority = std::move(kept);
  }

  for (auto* cls : {&pos, &neg}) {
    std::vector<const CaseDocument*> docs = *cls;
    std::shuffle(docs.begin(), docs.end(), rng);
    const auto n = docs.size();
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    const auto n_dev = std::min(n - n_train, static_cast<std::size_t>(std::llround(cfg.dev_fraction * static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i) {
      auto& bucket = i < n_train ? split.train : (i < n_train + n_dev ? split.dev : split.test);
      bucket.push_back(docs[i]->case_id);
    }
    for (const auto* d : docs) {
      for (const auto& [article, outcome] : d->articles) ++split.per_article_counts[article];
      ++split.per_year_counts[year_of(*d)];
    }
  }
  split.positives = static_cast<int>(pos.size());
  split.negatives = static_cast<int>(neg.size());
  for (auto* v : {&split.train, &split.dev, &split.test}) std::sort(v->begin(), v->end());
  return split;
}

// --- persistence -------------------------------------------------------------

namespace {

json case_to_json(const CaseDocument& d) {
  json articles = json::object();
  for (const auto& [a, o] : d.articles) articles[a] = to_string(o);
  json j = {{"case_id", d.case_id},
            {"facts", d.facts},
            {"conclusion", d.conclusion},
            {"articles", articles},
            {"language", d.language}};
  if (d.decision_date)
    j["decision_date"] = fmt::format("{:04d}-{:02d}-{:02d}", d.decision_date->year,
                                     d.decision_date->month, d.decision_date->day);
  if (!d.paragraph_starts.empty()) j["paragraph_starts"] = d.paragraph_starts;
  if (d.gold) j["label"] = to_string(*d.gold);
  return j;
}

CaseDocument case_from_json(const json& j) {
  CaseDocument d;
  d.case_id = j.at("case_id").get<std::string>();
  const json& facts = j.contains("facts") ? j["facts"] : j.at("facts_text");
  d.facts = facts.is_string() ? tokenize_text(facts.get<std::string>())
                              : facts.get<std::vector<std::string>>();
  d.conclusion = j.value("conclusion", j.value("conclusion_text", std::string{}));
  if (j.contains("articles"))
    for (const auto& [a, o] : j["articles"].items())
      d.articles[a] = outcome_from_string(o.get<std::string>());
  d.language = j.value("language", "en");
  if (j.contains("decision_date") && j["decision_date"].is_string()) {
    Date date;
    if (std::sscanf(j["decision_date"].get<std::string>().c_str(), "%d-%d-%d", &date.year,
                    &date.month, &date.day) == 3)
      d.decision_date = date;
  }
  if (j.contains("paragraph_starts"))
    d.paragraph_starts = j["paragraph_starts"].get<std::vector<std::size_t>>();
  if (j.contains("label")) d.gold = label_value_from_string(j["label"].get<std::string>());
  return d;
}

}  // namespace

std::vector<CaseDocument> read_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open case file " + path.string());
  std::vector<CaseDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      docs.push_back(case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw CorpusError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return docs;
}

void write_cases(const std::vector<CaseDocument>& docs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& d : docs) out << case_to_json(d).dump() << '\n';
}

std::vector<CaseDocument> read_case_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CaseDocument> docs;
  for (const auto& f : files) {
    if (f.extension() == ".json") {
      std::ifstream in(f);
      const json j = json::parse(in);
      if (j.is_array()) {
        for (const auto& item : j) docs.push_back(case_from_json(item));
      } else {
        docs.push_back(case_from_json(j));
      }
    } else {
      auto part = read_cases(f);
      docs.insert(docs.end(), part.begin(), part.end());
    }
  }
  return docs;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json labels = json::object();
  for (const auto& [id, v] : m.labels) labels[id] = to_string(v);
  json per_year = json::object();
  for (const auto& [y, n] : m.split.per_year_counts) per_year[std::to_string(y)] = n;
  const json j = {
      {"cases_file", m.cases_file.generic_string()},
      {"config",
       {{"seed", m.config.seed},
        {"tolerance_pp", m.config.tolerance_pp},
        {"train_fraction", m.config.train_fraction},
        {"dev_fraction", m.config.dev_fraction}}},
      {"split",
       {{"train", m.split.train},
        {"dev", m.split.dev},
        {"test", m.split.test},
        {"per_article_counts", m.split.per_article_counts},
        {"per_year_counts", per_year},
        {"positives", m.split.positives},
        {"negatives", m.split.negatives},
        {"warnings", m.split.warnings}}},
      {"labels", labels}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open manifest " + path.string());
  const json j = json::parse(in);
  Manifest m;
  m.cases_file = j.at("cases_file").get<std::string>();
  const json& c = j.at("config");
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.config.tolerance_pp = c.at("tolerance_pp").get<double>();
  m.config.train_fraction = c.at("train_fraction").get<double>();
  m.config.dev_fraction = c.at("dev_fraction").get<double>();
  const json& s = j.at("split");
  m.split.train = s.at("train").get<std::vector<std::string>>();
  m.split.dev = s.at("dev").get<std::vector<std::string>>();
  m.split.test = s.at("test").get<std::vector<std::string>>();
  m.split.per_article_counts = s.at("per_article_counts").get<std::map<std::string, int>>();
  for (const auto& [y, n] : s.at("per_year_counts").items())
    m.split.per_year_counts[std::stoi(y)] = n.get<int>();
  m.split.positives = s.at("positives").get<int>();
  m.split.negatives = s.at("negatives").get<int>();
  m.split.warnings = s.at("warnings").get<std::vector<std::string>>();
  for (const auto& [id, v] : j.at("labels").items())
    m.labels[id] = label_value_from_string(v.get<std::string>());
  return m;
}

const CaseDocument& LoadedCorpus::at(const std::string& case_id) const {
  auto it = index.find(case_id);
  if (it == index.end()) throw CorpusError("case " + case_id + " not in corpus");
  return docs[it->second];
}

std::vector<const CaseDocument*> LoadedCorpus::select(const std::vector<std::string>& ids) const {
  std::vector<const CaseDocument*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(&at(id));
  return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& manifest_path) {
  LoadedCorpus c;
  c.manifest = read_manifest(manifest_path);
  c.docs = read_cases(manifest_path.parent_path() / c.manifest.cases_file);
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    auto it = c.manifest.labels.find(c.docs[i].case_id);
    if (it != c.manifest.labels.end()) c.docs[i].gold = it->second;
    c.index[c.docs[i].case_id] = i;
  }
  return c;
}

}  // namespace inteval::corpus
