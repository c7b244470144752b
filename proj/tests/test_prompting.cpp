#include "doctest.h"
#include "expforce/errors.hpp"
#include "expforce/image.hpp"
#include "test_support.hpp"

using namespace expforce;

namespace {

ExperienceExample example(const std::string& id, double f) {
  ExperienceExample ex;
  ex.record.id = id;
  ex.record.name = "cup " + id;
  ex.record.mass_kg = 0.125;
  ex.record.description = "ceramic cup  ";
  ex.record.image_ref = "images/" + id + ".png";
  ex.record.f_star_n = f;
  ex.image = solid_color_png(0, 0, 255);
  return ex;
}

const std::string kQuery = solid_color_png(9, 9, 9);

}  // namespace

TEST_CASE("descriptor prompt layout") {
  auto ctx = SharedContext::defaults();
  auto b = build_descriptor_prompt(ctx, kQuery);
  REQUIRE(b.messages.size() == 1);
  const auto& s = b.messages[0].segments;
  REQUIRE(s.size() == 3);
  CHECK(s[0].kind == SegmentKind::Text);
  CHECK(s[0].payload.find("Gripper: ") != std::string::npos);
  CHECK(s[1].payload == Templates::defaults().desc_instruction);
  CHECK(s[2] == Segment::image(kQuery));

  ctx.embodiment_image = solid_color_png(1, 1, 1);
  ctx.scale_reference_image = solid_color_png(2, 2, 2);
  CHECK(build_descriptor_prompt(ctx, kQuery).messages[0].segments.size() == 5);
  ctx.include_embodiment = false;
  auto trimmed = build_descriptor_prompt(ctx, kQuery).messages[0].segments;
  CHECK(trimmed.size() == 4);
  CHECK(trimmed[0].payload.find("Gripper") == std::string::npos);
  CHECK(trimmed[0].payload.find("{embodiment}") == std::string::npos);
  CHECK_THROWS_AS(build_descriptor_prompt(ctx, ""), Error);
}

TEST_CASE("predictor prompt layout and experience order") {
  auto ctx = SharedContext::defaults();
  auto b = build_predictor_prompt(ctx, {example("x", 1.5), example("y", 0.25)}, kQuery);
  CHECK(b.k_used == 2);
  const auto& s = b.messages[0].segments;
  REQUIRE(s.size() == 1 + 2 * 2 + 2);
  CHECK(s[1].payload ==
        "Prior grasp 1 (most similar):\nObject: cup x\nMass: 0.125 kg\nDescription: ceramic cup\n"
        "Measured minimum grasping force: 1.50 N");
  CHECK(s[3].payload.rfind("Prior grasp 2:", 0) == 0);
  CHECK(s[5].payload == Templates::defaults().pred_instruction);
  CHECK(s[6] == Segment::image(kQuery));
  CHECK(experience_forces(b.messages) == std::vector<double>{1.5, 0.25});

  auto zero = build_predictor_prompt(ctx, {}, kQuery);
  CHECK(zero.messages[0].segments.size() == 3);
}

TEST_CASE("parse_force") {
  auto p = parse_force("Reasoning... roughly 2 N.\nFORCE_N: 3.75");
  CHECK(p.force_n == 3.75);
  CHECK(p.from_sentinel);
  CHECK(parse_force("FORCE_N: 1.0\nactually FORCE_N: 2.0").force_n == 2.0);
  auto u = parse_force("I would use 4.5 N for this.");
  CHECK(u.force_n == 4.5);
  CHECK_FALSE(u.from_sentinel);
  auto hi = parse_force("FORCE_N: 35");
  CHECK(hi.force_n == 20.0);
  CHECK(hi.raw_force_n == 35.0);
  CHECK(hi.clamped);
  CHECK(parse_force("FORCE_N: 0.1").force_n == 0.25);
  CHECK(parse_force("FORCE_N: 7.0").force_n == 7.0);  // a zero-shot overestimate passes through
  CHECK_THROWS_AS(parse_force("no idea"), Error);
  CHECK_THROWS_AS(parse_force("version 2.5Nm"), Error);
}

TEST_CASE("template lint") {
  auto d = Templates::defaults();
  CHECK(lint_template(d.context).empty());
  CHECK(lint_template(d.desc_instruction).empty());
  CHECK(lint_template(d.pred_instruction).empty());
  CHECK(!lint_template("consider the friction").empty());
  CHECK(!lint_template("mu = 0.5").empty());
  CHECK(!lint_template("F >= mg/2").empty());
  CHECK(!lint_template("\xce\xbc").empty());
  CHECK(lint_template("Estimate the minimum force in newtons.").empty());
}

TEST_CASE("shipped template files equal the built-in ones") {
  auto t = load_templates(fs::path(EXPFORCE_SOURCE_DIR) / "templates");
  auto d = Templates::defaults();
  CHECK(t.context == d.context);
  CHECK(t.desc_instruction == d.desc_instruction);
  CHECK(t.pred_instruction == d.pred_instruction);
  CHECK(d.context.find("{task_objective}") != std::string::npos);
  CHECK(d.pred_instruction.find(kForceSentinel) != std::string::npos);
}

TEST_CASE("describe_object") {
  auto ctx = SharedContext::defaults();
  auto prompt = build_descriptor_prompt(ctx, kQuery);
  CannedCompletionBackend desc({{prompt_hash(prompt.messages), "  a red mug \n"}});
  CHECK(describe_object(ctx, kQuery, desc) == "a red mug");
  try {
    describe_object(ctx, solid_color_png(1, 2, 3), desc);
    FAIL("expected EmptyDescription");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDescription);
  }
}

TEST_CASE("echo predictors") {
  auto ctx = SharedContext::defaults();
  auto b = build_predictor_prompt(ctx, {example("x", 1.5), example("y", 0.25), example("z", 1.0)}, kQuery);
  CHECK(parse_force(make_echo_predictor(EchoMode::Mean)->complete(b.messages)).force_n ==
        doctest::Approx(2.75 / 3).epsilon(1e-15));
  CHECK(parse_force(make_echo_predictor(EchoMode::Max)->complete(b.messages)).force_n == 1.5);
  auto zero = build_predictor_prompt(ctx, {}, kQuery);
  CHECK(make_echo_predictor(EchoMode::Mean)->complete(zero.messages) == "FORCE_N: 1.00");
}
