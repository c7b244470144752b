#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace expforce {

/// Semantic object category; a closed set of six.
enum class Category { Bottles, Cylinders, Cuboids, FragileHeavy, FragileLight, OddShapes };

inline constexpr std::array<Category, 6> kAllCategories = {
    Category::Bottles,      Category::Cylinders,    Category::Cuboids,
    Category::FragileHeavy, Category::FragileLight, Category::OddShapes};

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view name);

/// Ground-truth forces live on this grid (newtons).
inline constexpr double kForceGridN = 0.25;
inline constexpr double kGridTolerance = 1e-9;

bool on_force_grid(double force_n, double grid_n = kForceGridN);

/// One prior grasp.
struct ExperienceRecord {
  std::string id;
  std::string name;
  double mass_kg = 0.0;
  std::string description;
  std::string image_ref;  // relative to the pool root, e.g. "images/a.png"
  double f_star_n = 0.0;
  Category category = Category::OddShapes;

  bool operator==(const ExperienceRecord&) const = default;
};

/// The experience pool. Immutable once loaded; iteration order is manifest order.
class Pool {
 public:
  static constexpr int kManifestVersion = 1;

  Pool() = default;
  Pool(std::vector<ExperienceRecord> records, std::filesystem::path root,
       int manifest_version = kManifestVersion);

  const std::vector<ExperienceRecord>& records() const { return records_; }
  const std::filesystem::path& root() const { return root_; }
  int manifest_version() const { return manifest_version_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// nullptr when absent.
  const ExperienceRecord* find(std::string_view id) const;
  const ExperienceRecord& at(std::string_view id) const;

  std::filesystem::path image_path(const ExperienceRecord& r) const { return root_ / r.image_ref; }
  std::string read_image(const ExperienceRecord& r) const;

  std::vector<std::string> ids() const;

 private:
  std::vector<ExperienceRecord> records_;
  std::filesystem::path root_;
  int manifest_version_ = kManifestVersion;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr const char* kManifestFile = "pool.manifest";
inline constexpr const char* kImagesDir = "images";

/// Checks a record's field invariants. Image resolution is checked only when
/// a root is given.
void validate_record(const ExperienceRecord& r,
                     const std::optional<std::filesystem::path>& root = std::nullopt);

/// Serialized manifest (header line, then one record per line).
std::string serialize_manifest(const Pool& pool);

Pool load_pool(const std::filesystem::path& dir);

/// Writes the manifest and copies images into `dir` when the pool lives elsewhere.
void save_pool(const Pool& pool, const std::filesystem::path& dir);

struct Fold {
  std::vector<std::string> query_ids;
  std::vector<std::string> pool_ids;
};

/// Seeded shuffle then contiguous slicing; earlier folds absorb the remainder.
/// Both id lists of each fold are returned in manifest order.
std::vector<Fold> partition_folds(const Pool& pool, int n_folds, std::uint64_t seed);

/// Content digest of a pool (manifest plus image bytes).
std::string pool_digest(const Pool& pool);

}  // namespace expforce
