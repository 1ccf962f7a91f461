#include "grapener/corpus.hpp"

#include <fstream>
#include <sstream>

#include "grapener/hash.hpp"

namespace grapener {

std::string IobTag::str() const {
  switch (kind) {
    case TagKind::B: return "B-" + entity_type;
    case TagKind::I: return "I-" + entity_type;
    default: return "O";
  }
}

IobTag IobTag::parse(const std::string& s) {
  if (s == "O") return {TagKind::O, ""};
  if (s.size() > 2 && s[1] == '-' && (s[0] == 'B' || s[0] == 'I'))
    return {s[0] == 'B' ? TagKind::B : TagKind::I, s.substr(2)};
  throw Error("bad IOB2 tag '" + s + "'");
}

const std::vector<LabeledSentence>& Corpus::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw Error("corpus '" + this->name + "' has no split '" + name + "'");
  return it->second;
}

namespace {

// "token<TAB or run of spaces>tag"; extra columns are an error.
void split_line(const std::string& line, size_t line_no,
                std::string& token, std::string& tag) {
  std::istringstream ss(line);
  std::string extra;
  if (!(ss >> token >> tag) || (ss >> extra))
    throw ParseError("expected 'token tag', got '" + line + "'", line_no);
}

}  // namespace

ParseResult parse_conll(std::istream& in,
                        const std::set<std::string>& entity_types,
                        const std::string& id_prefix) {
  ParseResult result;
  std::vector<std::string> tokens;
  std::vector<IobTag> tags;
  std::vector<size_t> lines;  // input line of each token, for repair reports

  auto flush = [&](void) {
    if (tokens.empty()) return;
    LabeledSentence ls;
    ls.sentence.id = id_prefix + "-" + std::to_string(result.sentences.size());
    ls.sentence.tokens = std::move(tokens);
    ls.tags = std::move(tags);
    // IOB2 well-formedness: an I must continue a same-type B/I run.
    for (size_t i = 0; i < ls.tags.size(); ++i) {
      IobTag& t = ls.tags[i];
      if (t.kind != TagKind::I) continue;
      bool ok = i > 0 && ls.tags[i - 1].kind != TagKind::O &&
                ls.tags[i - 1].entity_type == t.entity_type;
      if (!ok) {
        result.repairs.push_back(
            {lines[i], ls.sentence.id, i, t.str(), "B-" + t.entity_type});
        t.kind = TagKind::B;
      }
    }
    result.sentences.push_back(std::move(ls));
    tokens.clear();
    tags.clear();
    lines.clear();
  };

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    std::string token, tag_str;
    split_line(line, line_no, token, tag_str);
    IobTag tag;
    try {
      tag = IobTag::parse(tag_str);
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
    if (tag.kind != TagKind::O && !entity_types.count(tag.entity_type))
      throw ParseError("entity type '" + tag.entity_type +
                       "' is not in the declared label set", line_no);
    tokens.push_back(std::move(token));
    tags.push_back(std::move(tag));
    lines.push_back(line_no);
  }
  flush();
  return result;
}

ParseResult parse_conll_string(const std::string& text,
                               const std::set<std::string>& entity_types,
                               const std::string& id_prefix) {
  std::istringstream ss(text);
  return parse_conll(ss, entity_types, id_prefix);
}

ParseResult parse_conll_file(const std::string& path,
                             const std::set<std::string>& entity_types,
                             const std::string& id_prefix) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  return parse_conll(in, entity_types, id_prefix);
}

std::string to_conll(const std::vector<LabeledSentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    for (size_t i = 0; i < s.size(); ++i) {
      out += s.sentence.tokens[i];
      out += '\t';
      out += s.tags[i].str();
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

SplitStats split_stats(const std::vector<LabeledSentence>& sentences) {
  SplitStats st;
  st.sentences = sentences.size();
  for (const auto& s : sentences) {
    st.tokens += s.size();
    for (const auto& t : s.tags)
      if (t.kind == TagKind::B) {
        ++st.entities_by_type[t.entity_type];
        ++st.entities_total;
      }
  }
  if (st.sentences > 0)
    st.mean_entities_per_sentence = double(st.entities_total) / double(st.sentences);
  return st;
}

SplitStats corpus_stats(const Corpus& corpus, const std::string& split) {
  return split_stats(corpus.split(split));
}

Corpus load_corpus(const std::string& name,
                   const std::vector<std::string>& entity_types,
                   const std::map<std::string, std::string>& split_files,
                   std::vector<RepairRecord>* repairs_out) {
  Corpus c;
  c.name = name;
  c.entity_types = entity_types;
  std::set<std::string> type_set(entity_types.begin(), entity_types.end());
  for (const auto& [split, path] : split_files) {
    ParseResult r = parse_conll_file(path, type_set, split);
    if (repairs_out)
      repairs_out->insert(repairs_out->end(), r.repairs.begin(), r.repairs.end());
    c.splits[split] = std::move(r.sentences);
  }
  return c;
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

}  // namespace grapener
