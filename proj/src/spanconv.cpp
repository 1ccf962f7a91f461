#include "grapener/spanconv.hpp"

#include <json.hpp>

#include "grapener/demos.hpp"

namespace grapener {

const char* role_name(PositionRole r) {
  switch (r) {
    case PositionRole::CLS: return "CLS";
    case PositionRole::SEP: return "SEP";
    case PositionRole::CONTEXT: return "CONTEXT";
    default: return "DEMO";
  }
}

PositionRole role_from_name(const std::string& s) {
  if (s == "CLS") return PositionRole::CLS;
  if (s == "SEP") return PositionRole::SEP;
  if (s == "CONTEXT") return PositionRole::CONTEXT;
  if (s == "DEMO") return PositionRole::DEMO;
  throw Error("bad position role '" + s + "'");
}

std::vector<EntitySpan> iob2_to_spans(const LabeledSentence& labeled) {
  std::vector<EntitySpan> spans;
  const auto& tags = labeled.tags;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].kind != TagKind::B) continue;
    size_t end = i + 1;
    while (end < tags.size() && tags[end].kind == TagKind::I &&
           tags[end].entity_type == tags[i].entity_type)
      ++end;
    spans.push_back({i, end, tags[i].entity_type});
  }
  return spans;
}

std::vector<IobTag> spans_to_iob2(const std::vector<EntitySpan>& spans, size_t length) {
  std::vector<IobTag> tags(length, IobTag{TagKind::O, ""});
  std::vector<EntitySpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  size_t prev_end = 0;
  for (const auto& sp : sorted) {
    if (sp.start >= sp.end || sp.end > length)
      throw Error("span (" + std::to_string(sp.start) + ", " + std::to_string(sp.end) +
                  ") out of bounds for length " + std::to_string(length));
    if (sp.start < prev_end)
      throw Error("overlapping spans at token " + std::to_string(sp.start));
    prev_end = sp.end;
    tags[sp.start] = {TagKind::B, sp.entity_type};
    for (size_t i = sp.start + 1; i < sp.end; ++i)
      tags[i] = {TagKind::I, sp.entity_type};
  }
  return tags;
}

MrcInstance assemble_instance(const LabeledSentence& context,
                              const Demonstration* demo,
                              const std::string& entity_type,
                              bool supervise_demo,
                              size_t max_seq_len) {
  bool with_demo = demo != nullptr && demo->present();
  size_t n_ctx = context.size();
  size_t n_demo = with_demo ? demo->sentence.size() : 0;
  size_t total = 1 + n_ctx + 1 + (with_demo ? n_demo + 1 : 0);
  if (total > max_seq_len)
    throw Error("instance " + context.id() + "/" + entity_type + " has length " +
                std::to_string(total) + " > max_seq_len " + std::to_string(max_seq_len));

  MrcInstance inst;
  inst.source_id = context.id();
  inst.entity_type = entity_type;
  inst.context_offset = 1;
  inst.context_len = n_ctx;
  inst.tokens.reserve(total);
  inst.roles.reserve(total);

  inst.tokens.push_back("[CLS]");
  inst.roles.push_back(PositionRole::CLS);
  for (const auto& t : context.sentence.tokens) {
    inst.tokens.push_back(t);
    inst.roles.push_back(PositionRole::CONTEXT);
  }
  inst.tokens.push_back("[SEP]");
  inst.roles.push_back(PositionRole::SEP);
  if (with_demo) {
    for (const auto& t : demo->sentence.sentence.tokens) {
      inst.tokens.push_back(t);
      inst.roles.push_back(PositionRole::DEMO);
    }
    inst.tokens.push_back("[SEP]");
    inst.roles.push_back(PositionRole::SEP);
  }

  inst.y_start.assign(total, 0);
  inst.y_end.assign(total, 0);
  for (const auto& sp : iob2_to_spans(context))
    if (sp.entity_type == entity_type) {
      inst.y_start[inst.context_offset + sp.start] = 1;
      inst.y_end[inst.context_offset + sp.end - 1] = 1;
    }
  if (with_demo && supervise_demo) {
    size_t demo_offset = 1 + n_ctx + 1;
    for (const auto& sp : iob2_to_spans(demo->sentence))
      if (sp.entity_type == entity_type) {
        inst.y_start[demo_offset + sp.start] = 1;
        inst.y_end[demo_offset + sp.end - 1] = 1;
      }
  }
  return inst;
}

std::string instance_to_jsonl(const MrcInstance& inst) {
  nlohmann::json j;
  j["id"] = inst.source_id;
  j["type"] = inst.entity_type;
  j["tokens"] = inst.tokens;
  std::vector<std::string> roles;
  roles.reserve(inst.roles.size());
  for (auto r : inst.roles) roles.emplace_back(role_name(r));
  j["roles"] = roles;
  j["y_start"] = std::vector<int>(inst.y_start.begin(), inst.y_start.end());
  j["y_end"] = std::vector<int>(inst.y_end.begin(), inst.y_end.end());
  return j.dump();
}

MrcInstance instance_from_jsonl(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  MrcInstance inst;
  inst.source_id = j.at("id").get<std::string>();
  inst.entity_type = j.at("type").get<std::string>();
  inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& r : j.at("roles"))
    inst.roles.push_back(role_from_name(r.get<std::string>()));
  for (int v : j.at("y_start")) inst.y_start.push_back(uint8_t(v));
  for (int v : j.at("y_end")) inst.y_end.push_back(uint8_t(v));
  if (inst.tokens.size() != inst.roles.size() ||
      inst.tokens.size() != inst.y_start.size() ||
      inst.tokens.size() != inst.y_end.size())
    throw Error("instance record field lengths disagree");
  for (size_t i = 0; i < inst.roles.size(); ++i)
    if (inst.roles[i] == PositionRole::CONTEXT) {
      inst.context_offset = i;
      break;
    }
  for (auto r : inst.roles) inst.context_len += r == PositionRole::CONTEXT ? 1 : 0;
  return inst;
}

}  // namespace grapener
