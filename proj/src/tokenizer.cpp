#include "inteval/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "inteval/error.hpp"
#include "inteval/kernels.hpp"

namespace inteval {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus) {
  Vocabulary v;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) v.add(tok);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  INTEVAL_EXPECT(id >= 0 && id < size(), "token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::fingerprint() const {
  std::uint64_t h = 0;
  for (const auto& t : tokens_) h = splitmix64(h ^ hash_string(t.data(), t.size()));
  return fmt::format("wordvocab-{}-{:016x}", tokens_.size(), h);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw HarnessError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot read vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (row >= 2) v.add(line);
    ++row;
  }
  return v;
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '-' && c != '\'') {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

}  // namespace inteval
