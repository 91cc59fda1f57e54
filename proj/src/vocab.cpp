#include "qedlm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "qedlm/errors.hpp"

namespace qedlm {

Vocabulary::Vocabulary() {
  for (auto r : kReserved) {
    index_.emplace(std::string(r), tokens_.size());
    tokens_.emplace_back(r);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved.size()) throw VocabularyError("vocabulary: reserved tokens missing");
  for (std::size_t i = 0; i < kReserved.size(); ++i) {
    if (tokens[i] != kReserved[i]) {
      throw VocabularyError("vocabulary: entry " + std::to_string(i) + " must be " + std::string(kReserved[i]) +
                            ", found '" + tokens[i] + "'");
    }
  }
  Vocabulary v;
  for (std::size_t i = kReserved.size(); i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw VocabularyError("vocabulary: empty token at line " + std::to_string(i + 1));
    if (!v.index_.emplace(tokens[i], v.tokens_.size()).second) {
      throw VocabularyError("vocabulary: duplicate token '" + tokens[i] + "'");
    }
    v.tokens_.push_back(std::move(tokens[i]));
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences) {
  Vocabulary v;
  for (const auto& s : sentences)
    for (const auto& w : s)
      if (v.index_.emplace(w, v.tokens_.size()).second) v.tokens_.push_back(w);
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw VocabularyError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

TokenIds Vocabulary::encode(const std::vector<std::string>& words, std::size_t n) const {
  if (n < 2) throw ContractError("encode: sequence length must be at least 2");
  TokenIds ids(n, kPad);
  ids[0] = kStart;
  const std::size_t k = std::min(words.size(), n - 2);
  for (std::size_t i = 0; i < k; ++i) ids[i + 1] = id(words[i]);
  ids[k + 1] = kEnd;
  return ids;
}

std::vector<std::string> Vocabulary::decode(const TokenIds& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

bool is_special(std::size_t id) {
  return id == Vocabulary::kStart || id == Vocabulary::kEnd || id == Vocabulary::kPad;
}

TokenIds strip_special(const TokenIds& ids) {
  TokenIds out;
  for (auto i : ids)
    if (!is_special(i)) out.push_back(i);
  return out;
}

std::string detokenize(const Vocabulary& vocab, const TokenIds& ids) {
  std::string out;
  for (auto i : strip_special(ids)) {
    if (!out.empty()) out += ' ';
    out += vocab.token(i);
  }
  return out;
}

std::string render_sample(const Vocabulary& vocab, const TokenIds& ids) {
  std::size_t last = ids.size();
  while (last > 0 && ids[last - 1] == Vocabulary::kPad) --last;
  std::string out;
  for (std::size_t i = 0; i < last; ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

CorpusLine parse_corpus_line(std::string_view line) {
  CorpusLine out;
  const auto sep = line.find("|||");
  std::string_view text = line;
  if (sep != std::string_view::npos) {
    for (const auto& kv : tokenize(line.substr(0, sep))) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("corpus: malformed field annotation '" + kv + "'");
      out.fields[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    text = line.substr(sep + 3);
  }
  out.words = tokenize(text);
  return out;
}

std::string format_corpus_line(const CorpusLine& line) {
  std::string out;
  for (const auto& [k, v] : line.fields) out += k + "=" + v + " ";
  if (!line.fields.empty()) out += "||| ";
  for (std::size_t i = 0; i < line.words.size(); ++i) {
    if (i) out += ' ';
    out += line.words[i];
  }
  return out;
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus file '" + path + "'");
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto parsed = parse_corpus_line(line);
    if (!parsed.words.empty()) corpus.push_back(std::move(parsed));
  }
  return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file '" + path + "'");
  for (const auto& l : corpus) out << format_corpus_line(l) << '\n';
}

bool is_eval_line(std::size_t index) {
  // splitmix64 finalizer
  std::uint64_t z = static_cast<std::uint64_t>(index) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z % 10 == 0;
}

namespace {

const std::vector<std::string> kNames{
    "Vaults", "Aromi", "Cotto", "Zizzi", "Alimentum", "Bibimbap", "Browns", "Clowns", "Cocum", "Fitzbillies",
    "Giraffe", "Loch", "Midsummer", "Strada", "Wildwood", "Phoenix", "Punter", "Waterman", "Wrestlers",
    "Cricketers", "Olive", "Mill", "Eagle", "Plough", "Dumpling", "Rice", "Golden", "Twenty", "Cambridge",
    "Sicilia", "Travellers", "Aspen", "Bluebird", "Copper", "Dragon", "Ember", "Fennel", "Granary", "Harbour",
    "Ivy", "Juniper", "Kettle", "Lantern", "Maple", "Nutmeg", "Orchard", "Pepper", "Quayside", "Rosemary",
    "Saffron", "Thistle", "Umber", "Vine", "Willow", "Yarrow", "Zest", "Anchor", "Beacon", "Cedar", "Driftwood",
    "Acorn", "Bramble", "Clover", "Dove", "Elm", "Falcon", "Gable", "Heron", "Iris", "Jasper", "Kestrel", "Linden",
    "Magpie", "Nettle", "Oakwood", "Pelican", "Quill", "Raven", "Sparrow", "Tulip", "Upland", "Violet", "Wren",
    "Alder", "Birch", "Comet", "Delta", "Ferry", "Grove", "Hazel"};
const std::vector<std::string> kFoods{"Italian", "French", "Chinese", "Indian", "Japanese", "English",
                                      "Fast", "Thai", "Spanish", "Mexican", "Greek", "Turkish"};
const std::vector<std::string> kAreas{"riverside", "centre"};
const std::vector<std::string> kPrices{"cheap", "moderate", "expensive", "affordable"};
const std::vector<std::string> kRatings{"low", "average", "high", "excellent"};
const std::vector<std::string> kNear{
    "Avalon", "Rainbow", "Bakers", "Sorrento", "Burger", "Crowne", "Ranch", "Portland", "Express", "Raja",
    "Bridge", "Cathedral", "Market", "Station", "Museum", "Library", "Gallery", "Theatre", "Castle", "Harbor",
    "Stadium", "Chapel", "Park", "Square", "Tower", "Abbey", "Arcade", "Garden", "Pier", "Quarry", "Meadow",
    "Lighthouse", "Windmill", "Observatory", "Wharf", "Fountain", "Cloister", "Canal", "Forge", "Orchardside"};
const std::vector<std::string> kFamily{"family-friendly", "adults-only"};
const std::vector<std::string> kTypes{"restaurant", "pub", "cafe", "bistro"};

struct Template {
  std::vector<std::string> parts;  // "{field}" placeholders or literal words
};

const std::vector<Template> kTemplates{
    {{"{name}", "is", "a", "{price}", "{food}", "{type}", "in", "the", "{area}", "."}},
    {{"{name}", "serves", "{food}", "food", "in", "the", "{area}", "near", "{near}", "."}},
    {{"There", "is", "a", "{food}", "{type}", "called", "{name}", "near", "{near}", "."}},
    {{"{name}", "is", "a", "{family}", "{food}", "{type}", "with", "a", "{rating}", "rating", "."}},
    {{"In", "the", "{area}", ",", "{name}", "offers", "{price}", "{food}", "food", "."}},
    {{"{name}", "near", "{near}", "has", "{food}", "food", "and", "a", "{rating}", "customer", "rating", "."}},
    {{"The", "{type}", "{name}", "serves", "{price}", "{food}", "food", "."}},
    {{"{name}", "is", "{family}", "and", "serves", "{food}", "food", "near", "{near}", "."}},
    {{"For", "{food}", "food", "try", "{name}", "."}},
    {{"{name}", "is", "a", "{rating}", "rated", "{food}", "{type}", "by", "the", "{area}", "near", "{near}", "."}},
};

}  // namespace

Corpus make_toy_corpus(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  Corpus corpus;
  corpus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::map<std::string, std::string> record{
        {"name", pick(kNames)},     {"food", pick(kFoods)},     {"area", pick(kAreas)},
        {"price", pick(kPrices)},   {"rating", pick(kRatings)}, {"near", pick(kNear)},
        {"family", pick(kFamily)},  {"type", pick(kTypes)}};
    const auto& tpl = kTemplates[std::uniform_int_distribution<std::size_t>(0, kTemplates.size() - 1)(rng)];
    CorpusLine line;
    for (const auto& p : tpl.parts) {
      if (p.size() > 2 && p.front() == '{' && p.back() == '}') {
        const auto field = p.substr(1, p.size() - 2);
        line.fields[field] = record.at(field);
        line.words.push_back(record.at(field));
      } else {
        line.words.push_back(p);
      }
    }
    corpus.push_back(std::move(line));
  }
  return corpus;
}

}  // namespace qedlm
