#include <doctest.h>

#include <json.hpp>

#include "grapener/demos.hpp"
#include "grapener/spanconv.hpp"
#include "helpers.hpp"

using namespace grapener;
using helpers::make_sentence;

TEST_CASE("tags convert to half-open spans") {
  auto s = make_sentence("s-0", {"a", "b", "c", "d", "e"},
                         {"B-X", "I-X", "O", "B-X", "B-Y"});
  auto spans = iob2_to_spans(s);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0] == EntitySpan{0, 2, "X"});
  CHECK(spans[1] == EntitySpan{3, 4, "X"});
  CHECK(spans[2] == EntitySpan{4, 5, "Y"});

  CHECK(iob2_to_spans(make_sentence("s-1", {"a"}, {"O"})).empty());
  // Adjacent same-type entities stay separate because each B opens anew.
  auto adj = iob2_to_spans(make_sentence("s-2", {"a", "b"}, {"B-X", "B-X"}));
  REQUIRE(adj.size() == 2);
  CHECK(adj[0].end == 1);
  CHECK(adj[1].start == 1);
}

TEST_CASE("spans convert back to tags and reject bad input") {
  auto tags = spans_to_iob2({{1, 3, "X"}, {4, 5, "Y"}}, 5);
  CHECK(tags[0].str() == "O");
  CHECK(tags[1].str() == "B-X");
  CHECK(tags[2].str() == "I-X");
  CHECK(tags[3].str() == "O");
  CHECK(tags[4].str() == "B-Y");

  CHECK(spans_to_iob2({}, 3).size() == 3);
  CHECK_THROWS_AS(spans_to_iob2({{2, 2, "X"}}, 5), Error);   // empty
  CHECK_THROWS_AS(spans_to_iob2({{3, 2, "X"}}, 5), Error);   // inverted
  CHECK_THROWS_AS(spans_to_iob2({{4, 6, "X"}}, 5), Error);   // out of range
  CHECK_THROWS_AS(spans_to_iob2({{0, 2, "X"}, {1, 3, "Y"}}, 5), Error);  // overlap
}

TEST_CASE("span round trip is the identity on random sentences") {
  Rng rng(41);
  for (int i = 0; i < 300; ++i) {
    auto s = helpers::random_labeled_sentence(rng, "r", {"X", "Y"});
    std::vector<EntitySpan> spans = iob2_to_spans(s);
    CHECK(spans_to_iob2(spans, s.size()) == s.tags);
  }
}

TEST_CASE("position role names round trip") {
  for (auto r : {PositionRole::CLS, PositionRole::SEP, PositionRole::CONTEXT,
                 PositionRole::DEMO})
    CHECK(role_from_name(role_name(r)) == r);
  CHECK_THROWS_AS(role_from_name("WAT"), Error);
}

TEST_CASE("instances assemble as [CLS] context [SEP] demo [SEP]") {
  auto ctx = make_sentence("s-3", {"took", "quibrex", "now"}, {"O", "B-Chemical", "O"});
  Demonstration demo;
  demo.kind = DemoKind::Grape;
  demo.sentence = make_sentence("tr-7", {"quibrex", "helps"}, {"B-Chemical", "O"});
  demo.entity_type = "Chemical";

  MrcInstance inst = assemble_instance(ctx, &demo, "Chemical", true, 512);
  CHECK(inst.source_id == "s-3");
  CHECK(inst.entity_type == "Chemical");
  CHECK(inst.key() == "s-3::Chemical");
  CHECK(inst.tokens == std::vector<std::string>{"[CLS]", "took", "quibrex", "now",
                                                "[SEP]", "quibrex", "helps", "[SEP]"});
  CHECK(inst.roles == std::vector<PositionRole>{
                          PositionRole::CLS, PositionRole::CONTEXT, PositionRole::CONTEXT,
                          PositionRole::CONTEXT, PositionRole::SEP, PositionRole::DEMO,
                          PositionRole::DEMO, PositionRole::SEP});
  CHECK(inst.context_offset == 1);
  CHECK(inst.context_len == 3);
  CHECK(inst.y_start == std::vector<uint8_t>{0, 0, 1, 0, 0, 1, 0, 0});
  CHECK(inst.y_end == std::vector<uint8_t>{0, 0, 1, 0, 0, 1, 0, 0});

  SUBCASE("demo labels vanish when demo supervision is off") {
    MrcInstance quiet = assemble_instance(ctx, &demo, "Chemical", false, 512);
    CHECK(quiet.tokens == inst.tokens);
    CHECK(quiet.y_start == std::vector<uint8_t>{0, 0, 1, 0, 0, 0, 0, 0});
    CHECK(quiet.y_end == std::vector<uint8_t>{0, 0, 1, 0, 0, 0, 0, 0});
  }

  SUBCASE("no demo drops the second segment") {
    MrcInstance bare = assemble_instance(ctx, nullptr, "Chemical", true, 512);
    CHECK(bare.tokens == std::vector<std::string>{"[CLS]", "took", "quibrex", "now", "[SEP]"});
    CHECK(bare.roles.back() == PositionRole::SEP);
    CHECK(bare.y_start == std::vector<uint8_t>{0, 0, 1, 0, 0});

    Demonstration absent;  // kind None behaves like no demonstration
    MrcInstance bare2 = assemble_instance(ctx, &absent, "Chemical", true, 512);
    CHECK(bare2.tokens == bare.tokens);
  }

  SUBCASE("only spans of the queried type are labeled") {
    MrcInstance other = assemble_instance(ctx, &demo, "Disease", true, 512);
    CHECK(other.y_start == std::vector<uint8_t>(8, 0));
    CHECK(other.y_end == std::vector<uint8_t>(8, 0));
  }
}

TEST_CASE("multi-token and multiple spans mark start and end positions") {
  auto ctx = make_sentence("s-4", {"a", "b", "c", "d"}, {"B-X", "I-X", "O", "B-X"});
  MrcInstance inst = assemble_instance(ctx, nullptr, "X", true, 512);
  // Context tokens sit at offsets 1..4.
  CHECK(inst.y_start == std::vector<uint8_t>{0, 1, 0, 0, 1, 0});
  CHECK(inst.y_end == std::vector<uint8_t>{0, 0, 1, 0, 1, 0});
}

TEST_CASE("combined length beyond the cap is an error") {
  auto ctx = make_sentence("s-5", {"a", "b", "c"}, {"O", "O", "O"});
  Demonstration demo;
  demo.kind = DemoKind::Grape;
  demo.sentence = make_sentence("tr-0", {"x", "y"}, {"B-X", "O"});
  // 1 + 3 + 1 + 2 + 1 = 8 positions in total.
  CHECK_NOTHROW(assemble_instance(ctx, &demo, "X", true, 8));
  CHECK_THROWS_AS(assemble_instance(ctx, &demo, "X", true, 7), Error);
  CHECK_NOTHROW(assemble_instance(ctx, nullptr, "X", true, 5));
  CHECK_THROWS_AS(assemble_instance(ctx, nullptr, "X", true, 4), Error);
}

TEST_CASE("jsonl records round trip") {
  auto ctx = make_sentence("s-6", {"a", "b"}, {"B-X", "I-X"});
  Demonstration demo;
  demo.kind = DemoKind::Popular;
  demo.sentence = make_sentence("tr-1", {"c"}, {"B-X"});
  MrcInstance inst = assemble_instance(ctx, &demo, "X", true, 512);

  std::string line = instance_to_jsonl(inst);
  auto j = nlohmann::json::parse(line);
  CHECK(j.at("id") == "s-6");
  CHECK(j.at("type") == "X");
  CHECK(j.at("roles")[0] == "CLS");

  MrcInstance back = instance_from_jsonl(line);
  CHECK(back.source_id == inst.source_id);
  CHECK(back.entity_type == inst.entity_type);
  CHECK(back.tokens == inst.tokens);
  CHECK(back.roles == inst.roles);
  CHECK(back.y_start == inst.y_start);
  CHECK(back.y_end == inst.y_end);
  CHECK(back.context_offset == inst.context_offset);
  CHECK(back.context_len == inst.context_len);

  CHECK_THROWS_AS(instance_from_jsonl("{\"id\":\"x\"}"), std::exception);
}
