#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "expforce/model_gateway.hpp"
#include "expforce/pool.hpp"

namespace expforce {

/// Task information shared by the descriptor and predictor prompts.
struct SharedContext {
  std::string task_objective;
  std::string embodiment_text;
  std::optional<std::string> embodiment_image;        // image bytes
  std::optional<std::string> scale_reference_image;   // image bytes
  bool include_embodiment = true;

  static SharedContext defaults();
  void validate() const;
};

/// Prompt texts. {placeholders} are documented in docs/prompts.md.
struct Templates {
  std::string context;
  std::string desc_instruction;
  std::string pred_instruction;

  static Templates defaults();
};

inline constexpr const char* kContextTemplateFile = "context.txt";
inline constexpr const char* kDescInstructionFile = "desc_instruction.txt";
inline constexpr const char* kPredInstructionFile = "pred_instruction.txt";

/// Reads the three template files from `dir`; missing files keep the default.
Templates load_templates(const std::filesystem::path& dir);

/// Returns the banned analytic-force patterns found in `text` (empty if clean).
std::vector<std::string> lint_template(std::string_view text);

enum class PromptKind { Descriptor, Predictor };

struct PromptBundle {
  PromptKind kind = PromptKind::Predictor;
  int k_used = 0;
  std::vector<MultimodalMessage> messages;

  /// Canonical bytes; two bundles are identical iff these are.
  std::string serialize() const { return messages_to_wire_json(messages); }
  bool operator==(const PromptBundle&) const = default;
};

/// An experience as shown to the predictor: the record plus its image bytes.
struct ExperienceExample {
  ExperienceRecord record;
  std::string image;
};

inline constexpr const char* kForceSentinel = "FORCE_N:";
inline constexpr const char* kExperienceForceLabel = "Measured minimum grasping force:";

/// Text segment of the shared context (embodiment text dropped when excluded).
std::string render_context(const SharedContext& ctx, const Templates& t);

std::string format_force(double force_n);

/// Text that precedes the image of one experience block.
std::string render_experience_block(const ExperienceRecord& r, std::size_t rank);

PromptBundle build_descriptor_prompt(const SharedContext& ctx, std::string_view query_image,
                                     const Templates& t = Templates::defaults());

/// Experiences appear in the given (retrieval rank) order.
PromptBundle build_predictor_prompt(const SharedContext& ctx,
                                    const std::vector<ExperienceExample>& experiences,
                                    std::string_view query_image,
                                    const Templates& t = Templates::defaults());

inline constexpr double kMinForceN = 0.25;
inline constexpr double kMaxForceN = 20.0;

struct ParsedForce {
  double force_n = 0.0;      // after clamping
  double raw_force_n = 0.0;  // as written by the model
  bool clamped = false;
  bool from_sentinel = false;
};

/// Value of the last `FORCE_N:` line, else the last "<decimal> N" in the
/// text; clamped to [0.25, 20] N. Throws Unparseable when neither exists.
ParsedForce parse_force(std::string_view response);

/// Calls the descriptor model; returns the trimmed description.
std::string describe_object(const SharedContext& ctx, std::string_view query_image,
                            CompletionBackend& descriptor,
                            const Templates& t = Templates::defaults());

/// Forces listed in a predictor prompt's experience blocks, in order.
std::vector<double> experience_forces(const std::vector<MultimodalMessage>& messages);

enum class EchoMode { Mean, Max };

/// Deterministic predictor stub that answers with the mean (or max) of the
/// forces shown in the prompt, or `default_response` when none are shown.
std::shared_ptr<CompletionBackend> make_echo_predictor(EchoMode mode,
                                                       std::string default_response = "FORCE_N: 1.00");

/// Descriptor stub that maps each pool image's descriptor prompt to the
/// record's stored description.
std::shared_ptr<CannedCompletionBackend> make_catalog_descriptor(
    const Pool& pool, const SharedContext& ctx, const Templates& t = Templates::defaults(),
    std::string default_response = "");

}  // namespace expforce
