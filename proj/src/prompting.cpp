#include "expforce/prompting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include "default_templates.hpp"
#include "expforce/errors.hpp"
#include "expforce/io.hpp"

namespace expforce {

namespace fs = std::filesystem;

namespace {

std::string trim_trailing(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

void add_aux_images(std::vector<Segment>& segs, const SharedContext& ctx) {
  if (ctx.include_embodiment && ctx.embodiment_image) segs.push_back(Segment::image(*ctx.embodiment_image));
  if (ctx.scale_reference_image) segs.push_back(Segment::image(*ctx.scale_reference_image));
}

}  // namespace

SharedContext SharedContext::defaults() {
  SharedContext c;
  c.task_objective =
      "Estimate the minimum grasping force, in newtons, that lets the gripper lift the object in "
      "the last image without it slipping out of the fingers. Forces are commanded from 0.25 N "
      "upward in steps of 0.25 N. Too little force drops the object; too much force wastes effort "
      "and can crush fragile objects.";
  c.embodiment_text =
      "The gripper has two compliant fin-ray fingers that bend around the object as they close. "
      "The commanded grasping force is the sum of the normal forces of both fingertips.";
  return c;
}

void SharedContext::validate() const {
  if (trim(task_objective).empty()) fail(ErrorCode::InvalidArgument, "task_objective is empty");
  if (embodiment_image && embodiment_image->empty()) {
    fail(ErrorCode::MissingImage, "embodiment image is empty");
  }
  if (scale_reference_image && scale_reference_image->empty()) {
    fail(ErrorCode::MissingImage, "scale reference image is empty");
  }
}

Templates Templates::defaults() {
  return {trim_trailing(detail::kDefaultContextTemplate), trim_trailing(detail::kDefaultDescInstruction),
          trim_trailing(detail::kDefaultPredInstruction)};
}

Templates load_templates(const fs::path& dir) {
  Templates t = Templates::defaults();
  auto load = [&](const char* name, std::string& slot) {
    std::error_code ec;
    if (fs::is_regular_file(dir / name, ec)) slot = trim_trailing(read_file(dir / name));
  };
  load(kContextTemplateFile, t.context);
  load(kDescInstructionFile, t.desc_instruction);
  load(kPredInstructionFile, t.pred_instruction);
  return t;
}

std::vector<std::string> lint_template(std::string_view text) {
  struct Rule {
    const char* label;
    std::regex re;
  };
  static const std::vector<Rule> rules = [] {
    auto icase = std::regex::ECMAScript | std::regex::icase;
    return std::vector<Rule>{
        {"friction symbol (\xce\xbc)", std::regex("\xce\xbc")},
        {"friction symbol (mu)", std::regex(R"(\bmu\b)", icase)},
        {"coefficient", std::regex("coefficient", icase)},
        {"friction", std::regex("friction", icase)},
        {"Coulomb", std::regex("coulomb", icase)},
        {"weight-over-mu formula", std::regex(R"(\b(W|weight|mg|m\s*\*?\s*g)\s*/)", icase)},
        {"force equation", std::regex(R"(\bF(_\w+)?\s*>?=)")},
    };
  }();
  std::vector<std::string> hits;
  std::string s(text);
  for (const auto& r : rules) {
    if (std::regex_search(s, r.re)) hits.emplace_back(r.label);
  }
  return hits;
}

std::string render_context(const SharedContext& ctx, const Templates& t) {
  std::string embodiment;
  if (ctx.include_embodiment && !trim(ctx.embodiment_text).empty()) {
    embodiment = "Gripper: " + trim(ctx.embodiment_text);
  }
  std::string rendered = replace_all(t.context, "{task_objective}", trim(ctx.task_objective));
  // A line holding only the embodiment placeholder disappears with it.
  std::istringstream in(rendered);
  std::string line, out;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line) == "{embodiment}" && embodiment.empty()) continue;
    line = replace_all(line, "{embodiment}", embodiment);
    if (!first) out += '\n';
    out += line;
    first = false;
  }
  return out;
}

std::string format_force(double force_n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", force_n);
  return buf;
}

std::string render_experience_block(const ExperienceRecord& r, std::size_t rank) {
  char mass[32];
  std::snprintf(mass, sizeof mass, "%.4g", r.mass_kg);
  std::string out = "Prior grasp " + std::to_string(rank) + (rank == 1 ? " (most similar)" : "") + ":\n";
  out += "Object: " + r.name + "\n";
  out += "Mass: " + std::string(mass) + " kg\n";
  out += "Description: " + trim(r.description) + "\n";
  out += std::string(kExperienceForceLabel) + " " + format_force(r.f_star_n) + " N";
  return out;
}

PromptBundle build_descriptor_prompt(const SharedContext& ctx, std::string_view query_image,
                                     const Templates& t) {
  if (query_image.empty()) fail(ErrorCode::MissingImage, "query image is empty");
  ctx.validate();
  MultimodalMessage msg;
  msg.segments.push_back(Segment::text(render_context(ctx, t)));
  add_aux_images(msg.segments, ctx);
  msg.segments.push_back(Segment::text(t.desc_instruction));
  msg.segments.push_back(Segment::image(std::string(query_image)));
  return {PromptKind::Descriptor, 0, {std::move(msg)}};
}

PromptBundle build_predictor_prompt(const SharedContext& ctx,
                                    const std::vector<ExperienceExample>& experiences,
                                    std::string_view query_image, const Templates& t) {
  if (query_image.empty()) fail(ErrorCode::MissingImage, "query image is empty");
  ctx.validate();
  MultimodalMessage msg;
  msg.segments.push_back(Segment::text(render_context(ctx, t)));
  add_aux_images(msg.segments, ctx);
  std::size_t rank = 0;
  for (const auto& ex : experiences) {
    if (ex.image.empty()) fail(ErrorCode::MissingImage, "experience '" + ex.record.id + "' has no image");
    msg.segments.push_back(Segment::text(render_experience_block(ex.record, ++rank)));
    msg.segments.push_back(Segment::image(ex.image));
  }
  msg.segments.push_back(Segment::text(t.pred_instruction));
  msg.segments.push_back(Segment::image(std::string(query_image)));
  return {PromptKind::Predictor, static_cast<int>(experiences.size()), {std::move(msg)}};
}

ParsedForce parse_force(std::string_view response) {
  static const std::regex sentinel(R"(FORCE_N:\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)))");
  static const std::regex with_unit(R"((?:^|[^\w.])(\d+(?:\.\d+)?)\s*N\b)");
  const std::string text(response);

  ParsedForce out;
  std::string value;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), sentinel); it != std::sregex_iterator(); ++it) {
    value = (*it)[1].str();
    out.from_sentinel = true;
  }
  if (value.empty()) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), with_unit); it != std::sregex_iterator();
         ++it) {
      value = (*it)[1].str();
    }
  }
  if (value.empty()) fail(ErrorCode::Unparseable, "no force value in response");

  out.raw_force_n = std::strtod(value.c_str(), nullptr);
  if (!std::isfinite(out.raw_force_n)) fail(ErrorCode::Unparseable, "force value is not finite");
  out.force_n = std::clamp(out.raw_force_n, kMinForceN, kMaxForceN);
  out.clamped = out.force_n != out.raw_force_n;
  return out;
}

std::string describe_object(const SharedContext& ctx, std::string_view query_image,
                            CompletionBackend& descriptor, const Templates& t) {
  auto bundle = build_descriptor_prompt(ctx, query_image, t);
  std::string text;
  try {
    text = trim(descriptor.complete(bundle.messages));
  } catch (const EmptyResponse& e) {
    fail(ErrorCode::EmptyDescription, e.what());
  }
  if (text.empty()) fail(ErrorCode::EmptyDescription, "descriptor returned no text");
  return text;
}

std::vector<double> experience_forces(const std::vector<MultimodalMessage>& messages) {
  static const std::regex re(std::string(kExperienceForceLabel) + R"(\s*(\d+(?:\.\d+)?)\s*N)");
  std::vector<double> forces;
  for (const auto& m : messages) {
    for (const auto& s : m.segments) {
      if (s.kind != SegmentKind::Text) continue;
      for (auto it = std::sregex_iterator(s.payload.begin(), s.payload.end(), re);
           it != std::sregex_iterator(); ++it) {
        forces.push_back(std::strtod((*it)[1].str().c_str(), nullptr));
      }
    }
  }
  return forces;
}

std::shared_ptr<CompletionBackend> make_echo_predictor(EchoMode mode, std::string default_response) {
  std::string name = mode == EchoMode::Mean ? "stub-echo-mean" : "stub-echo-max";
  return std::make_shared<FunctionCompletionBackend>(
      name + ":" + default_response,
      [mode, default_response](const std::vector<MultimodalMessage>& messages) {
        auto forces = experience_forces(messages);
        if (forces.empty()) return default_response;
        double v = 0.0;
        if (mode == EchoMode::Mean) {
          for (double f : forces) v += f;
          v /= static_cast<double>(forces.size());
        } else {
          v = *std::max_element(forces.begin(), forces.end());
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s %.17g", kForceSentinel, v);
        return std::string(buf);
      });
}

std::shared_ptr<CannedCompletionBackend> make_catalog_descriptor(const Pool& pool, const SharedContext& ctx,
                                                                 const Templates& t,
                                                                 std::string default_response) {
  std::map<std::string, std::string> answers;
  for (const auto& r : pool.records()) {
    auto bundle = build_descriptor_prompt(ctx, pool.read_image(r), t);
    answers.emplace(prompt_hash(bundle.messages), r.description);
  }
  return std::make_shared<CannedCompletionBackend>(std::move(answers), std::move(default_response));
}

}  // namespace expforce
