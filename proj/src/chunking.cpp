#include <algorithm>

#include "inteval/error.hpp"
#include "inteval/model.hpp"
#include "inteval/tokenizer.hpp"

namespace inteval::model {

std::size_t ChunkedInput::chunk_start(std::size_t k) const {
  INTEVAL_EXPECT(k < chunks.size(), "chunk index out of range");
  std::size_t start = 0;
  for (std::size_t i = 0; i < k; ++i) start += chunks[i].size();
  return start;
}

std::vector<int> ChunkedInput::tokens() const {
  std::vector<int> out;
  out.reserve(token_map.size());
  for (const auto& c : chunks) out.insert(out.end(), c.begin(), c.end());
  return out;
}

int ChunkedInput::token_at(std::size_t global) const {
  INTEVAL_EXPECT(global < token_map.size(), "token index out of range");
  const auto& pos = token_map[global];
  return chunks[static_cast<std::size_t>(pos.chunk)][static_cast<std::size_t>(pos.offset)];
}

ChunkedInput chunk_tokens(const std::vector<int>& ids, std::string case_id,
                          std::size_t max_chunk_len, int pad_id) {
  INTEVAL_EXPECT(max_chunk_len >= 16, "max_chunk_len must be >= 16");
  if (ids.empty()) throw HarnessError("cannot chunk empty document " + case_id);
  ChunkedInput in;
  in.case_id = std::move(case_id);
  in.pad_id = pad_id;
  in.token_map.reserve(ids.size());
  for (std::size_t start = 0; start < ids.size(); start += max_chunk_len) {
    const std::size_t end = std::min(ids.size(), start + max_chunk_len);
    const int k = static_cast<int>(in.chunks.size());
    in.chunks.emplace_back(ids.begin() + static_cast<long>(start),
                           ids.begin() + static_cast<long>(end));
    for (std::size_t i = start; i < end; ++i)
      in.token_map.push_back({k, static_cast<int>(i - start)});
  }
  return in;
}

ChunkedInput chunk_document(const CaseDocument& doc, const Vocabulary& vocab,
                            std::size_t max_chunk_len) {
  return chunk_tokens(vocab.encode(doc.facts), doc.case_id, max_chunk_len,
                      Vocabulary::kPadId);
}

}  // namespace inteval::model
