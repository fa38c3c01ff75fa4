#include "inteval/archive.hpp"

#include <fstream>

#include <json.hpp>

#include "inteval/error.hpp"

namespace inteval::archive {

using json = nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(17);
  return out;
}

template <class Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

void write_scores(const std::vector<attribution::TokenScores>& scores,
                  const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& s : scores) {
    json j = {{"case_id", s.case_id},
              {"method", attribution::to_string(s.method)},
              {"target", s.target},
              {"scores", s.scores}};
    out << j.dump() << '\n';
  }
}

std::vector<attribution::TokenScores> read_scores(const std::filesystem::path& path) {
  std::vector<attribution::TokenScores> out;
  for_each_record(path, [&](const json& j) {
    attribution::TokenScores s;
    s.case_id = j.at("case_id").get<std::string>();
    s.method = attribution::method_from_string(j.at("method").get<std::string>());
    s.target = j.value("target", kViolationClass);
    s.scores = j.at("scores").get<std::vector<double>>();
    out.push_back(std::move(s));
  });
  return out;
}

std::map<std::string, std::vector<attribution::TokenScores>> scores_by_case(
    const std::vector<attribution::TokenScores>& scores) {
  std::map<std::string, std::vector<attribution::TokenScores>> out;
  for (const auto& s : scores) out[s.case_id].push_back(s);
  return out;
}

void write_rationales(const std::vector<RationaleSet>& sets, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& r : sets) {
    json spans = json::array();
    for (const auto& s : r.spans) spans.push_back({s.start, s.end});
    json j = {{"case_id", r.case_id},
              {"technique", to_string(r.technique)},
              {"spans", spans},
              {"chosen_method", r.chosen_method},
              {"selection_divergence", r.selection_divergence}};
    out << j.dump() << '\n';
  }
}

std::vector<RationaleSet> read_rationales(const std::filesystem::path& path) {
  std::vector<RationaleSet> out;
  for_each_record(path, [&](const json& j) {
    RationaleSet r;
    r.case_id = j.at("case_id").get<std::string>();
    r.technique = technique_from_string(j.at("technique").get<std::string>());
    for (const auto& s : j.at("spans")) {
      const auto start = s.at(0).get<std::size_t>();
      const auto end = s.at(1).get<std::size_t>();
      if (end < start) throw ValidationError("span end before start in " + r.case_id);
      r.spans.push_back({start, end});
    }
    r.chosen_method = j.value("chosen_method", "");
    r.selection_divergence = j.value("selection_divergence", 0.0);
    out.push_back(std::move(r));
  });
  return out;
}

std::map<std::string, RationaleSet> rationales_by_case(const std::vector<RationaleSet>& sets,
                                                       Technique technique) {
  std::map<std::string, RationaleSet> out;
  for (const auto& r : sets) {
    if (r.technique != technique) continue;
    if (!out.emplace(r.case_id, r).second)
      throw ValidationError("duplicate " + std::string(to_string(technique)) +
                            " rationale for " + r.case_id);
  }
  return out;
}

}  // namespace inteval::archive
