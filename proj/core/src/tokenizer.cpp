#include "iplforge/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "iplforge/error.hpp"
#include "iplforge/text.hpp"

namespace iplforge {

namespace {

std::vector<std::string> whitespace_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

std::vector<int> apply_merge(const std::vector<int>& symbols, int left,
                             int right, int product) {
  std::vector<int> out;
  out.reserve(symbols.size());
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == left &&
        symbols[i + 1] == right) {
      out.push_back(product);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      i += 1;
    }
  }
  return out;
}

}  // namespace

int Vocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

void Vocab::finalize() {
  if (tokens.empty() || tokens[0] != kBlankToken) {
    throw TokenizerError("token 0 must be " + std::string(kBlankToken));
  }
  index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw TokenizerError("empty token string");
    if (!index_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw TokenizerError("duplicate token string: " + tokens[i]);
    }
  }
  unk_id = id_of(kUnknownToken);
  boundary_id = id_of(kBoundaryMarker);
  if (unk_id < 0 || boundary_id < 0) {
    throw TokenizerError("vocab lacks the unknown or boundary token");
  }
  for (const Merge& m : merges) {
    if (m.left < 0 || m.right < 0 || m.product <= 0 || m.product >= size() ||
        m.left >= m.product || m.right >= m.product) {
      throw TokenizerError("merge references a token created later");
    }
    if (tokens[static_cast<std::size_t>(m.product)] !=
        tokens[static_cast<std::size_t>(m.left)] +
            tokens[static_cast<std::size_t>(m.right)]) {
      throw TokenizerError("merge product does not match its parts");
    }
  }
}

std::string pool_transcripts(
    const std::map<std::string, Manifest>& manifests) {
  if (manifests.empty()) throw TokenizerError("no manifests to pool");
  std::string corpus;
  for (const auto& [lang, manifest] : manifests) {
    for (const auto& rec : manifest.records) {
      corpus += rec.transcript;
      corpus += '\n';
    }
  }
  return corpus;
}

Vocab train_bpe(const std::string& corpus, int vocab_size) {
  const auto word_list = whitespace_words(corpus);
  if (word_list.empty()) throw TokenizerError("training corpus is empty");

  std::map<std::string, long long> word_freq;
  for (const auto& w : word_list) ++word_freq[w];

  std::set<std::string> chars;
  for (const auto& [word, freq] : word_freq) {
    for (auto& c : utf8_chars(word)) {
      if (c == kBoundaryMarker) {
        throw TokenizerError("corpus contains the boundary marker character");
      }
      chars.insert(c);
    }
  }

  Vocab vocab;
  vocab.tokens = {kBlankToken, kUnknownToken, kBoundaryMarker};
  vocab.tokens.insert(vocab.tokens.end(), chars.begin(), chars.end());
  if (vocab_size < vocab.size()) {
    throw TokenizerError("vocab_size " + std::to_string(vocab_size) +
                         " cannot cover blank, unknown, boundary, and " +
                         std::to_string(chars.size()) + " characters");
  }
  vocab.finalize();

  struct Word {
    std::vector<int> symbols;
    long long freq = 0;
  };
  std::vector<Word> words;
  for (const auto& [word, freq] : word_freq) {
    Word w;
    w.freq = freq;
    w.symbols.push_back(vocab.boundary_id);
    for (auto& c : utf8_chars(word)) w.symbols.push_back(vocab.id_of(c));
    words.push_back(std::move(w));
  }

  using Pair = std::pair<int, int>;
  std::map<Pair, long long> counts;
  std::map<Pair, std::set<std::size_t>> where;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      counts[{s[i], s[i + 1]}] += words[w].freq;
      where[{s[i], s[i + 1]}].insert(w);
    }
  }

  while (vocab.size() < vocab_size) {
    bool found = false;
    Pair best{};
    long long best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count < 2) continue;
      const auto key = std::make_pair(vocab.tokens[pair.first],
                                      vocab.tokens[pair.second]);
      const auto best_key = found ? std::make_pair(vocab.tokens[best.first],
                                                   vocab.tokens[best.second])
                                  : key;
      if (!found || count > best_count ||
          (count == best_count && key < best_key)) {
        best = pair;
        best_count = count;
        found = true;
      }
    }
    if (!found) break;

    const std::string product_str =
        vocab.tokens[best.first] + vocab.tokens[best.second];
    int product = vocab.id_of(product_str);
    if (product < 0) {
      product = vocab.size();
      vocab.tokens.push_back(product_str);
    }
    vocab.merges.push_back({best.first, best.second, product});

    const std::set<std::size_t> affected = where[best];
    for (std::size_t w : affected) {
      Word& word = words[w];
      std::set<Pair> old_types;
      for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i) {
        const Pair p{word.symbols[i], word.symbols[i + 1]};
        counts[p] -= word.freq;
        old_types.insert(p);
      }
      word.symbols = apply_merge(word.symbols, best.first, best.second, product);
      std::set<Pair> new_types;
      for (std::size_t i = 0; i + 1 < word.symbols.size(); ++i) {
        const Pair p{word.symbols[i], word.symbols[i + 1]};
        counts[p] += word.freq;
        new_types.insert(p);
      }
      for (const Pair& p : old_types) {
        if (!new_types.count(p)) where[p].erase(w);
      }
      for (const Pair& p : new_types) where[p].insert(w);
    }
    for (auto it = counts.begin(); it != counts.end();) {
      it = it->second <= 0 ? counts.erase(it) : std::next(it);
    }
    vocab.finalize();
  }
  return vocab;
}

std::vector<int> encode(const Vocab& vocab, const std::string& text) {
  std::vector<int> out;
  for (const auto& word : whitespace_words(text)) {
    std::vector<int> symbols;
    symbols.push_back(vocab.boundary_id);
    for (auto& c : utf8_chars(word)) {
      const int id = vocab.id_of(c);
      symbols.push_back(id >= 0 ? id : vocab.unk_id);
    }
    for (const auto& m : vocab.merges) {
      if (symbols.size() < 2) break;
      symbols = apply_merge(symbols, m.left, m.right, m.product);
    }
    out.insert(out.end(), symbols.begin(), symbols.end());
  }
  return out;
}

std::string decode_tokens(const Vocab& vocab, const std::vector<int>& ids) {
  std::string text;
  for (int id : ids) {
    if (id <= Vocab::kBlankId || id >= vocab.size()) {
      throw TokenizerError("cannot decode token id " + std::to_string(id));
    }
    text += vocab.tokens[static_cast<std::size_t>(id)];
  }
  const std::string marker = kBoundaryMarker;
  std::string spaced;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text.compare(pos, marker.size(), marker) == 0) {
      spaced += ' ';
      pos += marker.size();
    } else {
      spaced += text[pos];
      pos += 1;
    }
  }
  const auto begin = spaced.find_first_not_of(' ');
  if (begin == std::string::npos) return "";
  const auto end = spaced.find_last_not_of(' ');
  return spaced.substr(begin, end - begin + 1);
}

void save_vocab(const std::filesystem::path& path, const Vocab& vocab) {
  for (const auto& t : vocab.tokens) {
    if (t.find_first_of(" \t\n") != std::string::npos) {
      throw TokenizerError("token contains whitespace: '" + t + "'");
    }
  }
  std::ofstream out(path);
  if (!out) throw TokenizerError("cannot write vocab file: " + path.string());
  out << "bpe-vocab v1 " << vocab.size() << "\n[tokens]\n";
  for (const auto& t : vocab.tokens) out << t << "\n";
  out << "[merges]\n";
  for (const auto& m : vocab.merges) {
    out << vocab.tokens[static_cast<std::size_t>(m.left)] << ' '
        << vocab.tokens[static_cast<std::size_t>(m.right)] << "\n";
  }
  if (!out.flush()) {
    throw TokenizerError("cannot write vocab file: " + path.string());
  }
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TokenizerError("cannot open vocab file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("bpe-vocab v1 ", 0) != 0) {
    throw TokenizerError("bad vocab header in " + path.string());
  }
  int declared = 0;
  try {
    declared = std::stoi(line.substr(13));
  } catch (const std::exception&) {
    throw TokenizerError("bad vocab header in " + path.string());
  }
  if (!std::getline(in, line) || line != "[tokens]") {
    throw TokenizerError("missing [tokens] section in " + path.string());
  }
  Vocab vocab;
  while (std::getline(in, line) && line != "[merges]") {
    vocab.tokens.push_back(line);
  }
  if (line != "[merges]") {
    throw TokenizerError("missing [merges] section in " + path.string());
  }
  if (vocab.size() != declared) {
    throw TokenizerError("vocab header declares " + std::to_string(declared) +
                         " tokens but file has " +
                         std::to_string(vocab.size()));
  }
  vocab.finalize();  // build the index before resolving merges
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) {
      throw TokenizerError("bad merge line: '" + line + "'");
    }
    const std::string left = line.substr(0, space);
    const std::string right = line.substr(space + 1);
    Vocab::Merge m;
    m.left = vocab.id_of(left);
    m.right = vocab.id_of(right);
    m.product = vocab.id_of(left + right);
    if (m.left < 0 || m.right < 0 || m.product < 0) {
      throw TokenizerError("merge references unknown tokens: '" + line + "'");
    }
    vocab.merges.push_back(m);
  }
  vocab.finalize();
  return vocab;
}

}  // namespace iplforge
