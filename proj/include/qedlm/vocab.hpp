#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qedlm {

using TokenIds = std::vector<std::size_t>;

class Vocabulary {
 public:
  static constexpr std::size_t kStart = 0;
  static constexpr std::size_t kEnd = 1;
  static constexpr std::size_t kPad = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::array<std::string_view, 4> kReserved{"START", "END", "PAD", "UNK"};

  Vocabulary();
  // Reserved tokens must come first, in order; all tokens unique.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  // Reserved tokens followed by corpus words in order of first appearance.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const;
  std::optional<std::size_t> find(std::string_view token) const;
  // Unknown words map to UNK.
  std::size_t id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // START w_1 .. w_k END PAD .. PAD, exactly n ids; words past n - 2 are dropped.
  TokenIds encode(const std::vector<std::string>& words, std::size_t n) const;
  std::vector<std::string> decode(const TokenIds& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

bool is_special(std::size_t id);
// Ids with START/END/PAD removed.
TokenIds strip_special(const TokenIds& ids);
// Space-joined words with START/END/PAD removed.
std::string detokenize(const Vocabulary& vocab, const TokenIds& ids);
// Ids rendered with markers kept ("START a b END"), trailing PAD dropped.
std::string render_sample(const Vocabulary& vocab, const TokenIds& ids);

std::vector<std::string> tokenize(std::string_view line);

// One corpus line: optional "field=value" annotations, then the sentence.
// File syntax: "food=Italian area=riverside ||| The Vaults serves ...";
// a line without "|||" is a bare sentence.
struct CorpusLine {
  std::map<std::string, std::string> fields;
  std::vector<std::string> words;
};

using Corpus = std::vector<CorpusLine>;

Corpus read_corpus(const std::string& path);
void write_corpus(const std::string& path, const Corpus& corpus);
CorpusLine parse_corpus_line(std::string_view line);
std::string format_corpus_line(const CorpusLine& line);

// Held-out split by a deterministic hash of the line index (10% eval).
bool is_eval_line(std::size_t index);

// Templated restaurant descriptions with field annotations
// (name, food, area, price, rating, near, family, type).
Corpus make_toy_corpus(std::size_t count, std::uint64_t seed);

}  // namespace qedlm
