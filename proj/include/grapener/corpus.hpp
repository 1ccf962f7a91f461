#ifndef GRAPENER_CORPUS_HPP
#define GRAPENER_CORPUS_HPP

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "grapener/error.hpp"

namespace grapener {

enum class TagKind { B, I, O };

// One IOB2 tag. entity_type is empty iff kind == O.
struct IobTag {
  TagKind kind = TagKind::O;
  std::string entity_type;

  bool operator==(const IobTag&) const = default;
  std::string str() const;                     // "B-Chemical", "O", ...
  static IobTag parse(const std::string& s);   // throws Error on bad shape
};

struct TokenizedSentence {
  std::string id;
  std::vector<std::string> tokens;

  bool operator==(const TokenizedSentence&) const = default;
};

struct LabeledSentence {
  TokenizedSentence sentence;
  std::vector<IobTag> tags;

  size_t size() const { return sentence.tokens.size(); }
  const std::string& id() const { return sentence.id; }
  bool operator==(const LabeledSentence&) const = default;
};

struct Corpus {
  std::string name;
  std::vector<std::string> entity_types;
  std::map<std::string, std::vector<LabeledSentence>> splits;

  const std::vector<LabeledSentence>& split(const std::string& name) const;
};

// A tag rewritten during parsing (stray I promoted to B).
struct RepairRecord {
  size_t line = 0;            // 1-based input line
  std::string sentence_id;
  size_t token_index = 0;
  std::string from, to;
};

struct ParseResult {
  std::vector<LabeledSentence> sentences;
  std::vector<RepairRecord> repairs;
};

// Token-per-line CoNLL: "token<TAB or spaces>tag", blank line between
// sentences. Sentence ids are "<id_prefix>-<0-based index>".
ParseResult parse_conll(std::istream& in,
                        const std::set<std::string>& entity_types,
                        const std::string& id_prefix);
ParseResult parse_conll_string(const std::string& text,
                               const std::set<std::string>& entity_types,
                               const std::string& id_prefix);
ParseResult parse_conll_file(const std::string& path,
                             const std::set<std::string>& entity_types,
                             const std::string& id_prefix);

// Emits tab-separated lines, one blank line after every sentence.
std::string to_conll(const std::vector<LabeledSentence>& sentences);

struct SplitStats {
  size_t sentences = 0;
  size_t tokens = 0;
  std::map<std::string, size_t> entities_by_type;
  size_t entities_total = 0;         // number of B tags
  double mean_entities_per_sentence = 0.0;
};

SplitStats corpus_stats(const Corpus& corpus, const std::string& split);
SplitStats split_stats(const std::vector<LabeledSentence>& sentences);

// Parses every split file; repairs across all splits are concatenated.
Corpus load_corpus(const std::string& name,
                   const std::vector<std::string>& entity_types,
                   const std::map<std::string, std::string>& split_files,
                   std::vector<RepairRecord>* repairs_out = nullptr);

}  // namespace grapener

#endif
