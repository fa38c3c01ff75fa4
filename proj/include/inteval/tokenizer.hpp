#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace inteval {

// Closed-vocabulary word-level tokenizer. Ids 0 and 1 are reserved for the
// pad ("uninformative") token and for unknown words.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();

  // Adds every token of every sequence, in first-seen order.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // Stable identifier derived from the token list (stored with checkpoints).
  std::string fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  int add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lower-cases and splits on whitespace, separating trailing punctuation.
std::vector<std::string> tokenize_text(const std::string& text);

}  // namespace inteval
