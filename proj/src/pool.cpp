#include "expforce/pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/io.hpp"
#include "expforce/random.hpp"
#include "json.hpp"

namespace expforce {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Bottles: return "Bottles";
    case Category::Cylinders: return "Cylinders";
    case Category::Cuboids: return "Cuboids";
    case Category::FragileHeavy: return "FragileHeavy";
    case Category::FragileLight: return "FragileLight";
    case Category::OddShapes: return "OddShapes";
  }
  return "OddShapes";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

bool on_force_grid(double force_n, double grid_n) {
  if (!std::isfinite(force_n)) return false;
  double steps = force_n / grid_n;
  return std::fabs(steps - std::round(steps)) * grid_n <= kGridTolerance;
}

Pool::Pool(std::vector<ExperienceRecord> records, fs::path root, int manifest_version)
    : records_(std::move(records)), root_(std::move(root)), manifest_version_(manifest_version) {
  for (std::size_t i = 0; i < records_.size(); ++i) index_.try_emplace(records_[i].id, i);
}

const ExperienceRecord* Pool::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const ExperienceRecord& Pool::at(std::string_view id) const {
  const auto* r = find(id);
  if (r == nullptr) fail(ErrorCode::InvalidArgument, "unknown record id '" + std::string(id) + "'");
  return *r;
}

std::string Pool::read_image(const ExperienceRecord& r) const { return read_file(image_path(r)); }

std::vector<std::string> Pool::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

void validate_record(const ExperienceRecord& r, const std::optional<fs::path>& root) {
  if (r.id.empty()) throw SchemaViolation("<empty>", "id", "must be non-empty");
  if (!std::isfinite(r.mass_kg) || r.mass_kg < 0.0) {
    throw SchemaViolation(r.id, "mass_kg", "must be a finite non-negative number");
  }
  if (!std::isfinite(r.f_star_n) || r.f_star_n < kForceGridN - kGridTolerance) {
    throw SchemaViolation(r.id, "f_star_n", "must be at least 0.25 N");
  }
  if (!on_force_grid(r.f_star_n)) {
    throw SchemaViolation(r.id, "f_star_n", "not a multiple of the 0.25 N force grid");
  }
  fs::path ref(r.image_ref);
  if (r.image_ref.empty() || ref.is_absolute()) {
    throw SchemaViolation(r.id, "image_ref", "must be a non-empty relative path");
  }
  for (const auto& part : ref) {
    if (part == "..") throw SchemaViolation(r.id, "image_ref", "must not leave the pool directory");
  }
  if (root) {
    std::error_code ec;
    fs::path p = *root / ref;
    if (!fs::is_regular_file(p, ec)) {
      throw Error(ErrorCode::DanglingImageRef,
                  "record '" + r.id + "' references missing image " + p.string());
    }
  }
}

namespace {

ojson record_to_json(const ExperienceRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["name"] = r.name;
  j["category"] = std::string(to_string(r.category));
  j["mass_kg"] = r.mass_kg;
  j["f_star_n"] = r.f_star_n;
  j["image_ref"] = r.image_ref;
  j["description"] = r.description;
  return j;
}

template <typename T>
T required(const ojson& j, const std::string& id, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw SchemaViolation(id, field, "missing");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaViolation(id, field, "wrong type");
  }
}

double required_number(const ojson& j, const std::string& id, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw SchemaViolation(id, field, "missing");
  if (!it->is_number()) throw SchemaViolation(id, field, "must be a number");
  return it->get<double>();
}

ExperienceRecord record_from_json(const ojson& j, std::size_t line_no) {
  std::string fallback_id = "<line " + std::to_string(line_no) + ">";
  if (!j.is_object()) throw SchemaViolation(fallback_id, "<record>", "not an object");
  std::string id = fallback_id;
  if (auto it = j.find("id"); it != j.end() && it->is_string()) id = it->get<std::string>();

  static const std::unordered_set<std::string> kKnown = {
      "id", "name", "category", "mass_kg", "f_star_n", "image_ref", "description"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.count(key)) throw SchemaViolation(id, key, "unknown field");
  }

  ExperienceRecord r;
  r.id = required<std::string>(j, id, "id");
  r.name = required<std::string>(j, id, "name");
  auto cat = required<std::string>(j, id, "category");
  auto parsed = parse_category(cat);
  if (!parsed) throw SchemaViolation(id, "category", "unknown category '" + cat + "'");
  r.category = *parsed;
  r.mass_kg = required_number(j, id, "mass_kg");
  r.f_star_n = required_number(j, id, "f_star_n");
  r.image_ref = required<std::string>(j, id, "image_ref");
  r.description = required<std::string>(j, id, "description");
  return r;
}

}  // namespace

std::string serialize_manifest(const Pool& pool) {
  std::string out;
  ojson header;
  header["format"] = "expforce-pool";
  header["manifest_version"] = pool.manifest_version();
  header["records"] = pool.size();
  out += header.dump() + "\n";
  for (const auto& r : pool.records()) out += record_to_json(r).dump() + "\n";
  return out;
}

Pool load_pool(const fs::path& dir) {
  fs::path manifest = dir / kManifestFile;
  std::error_code ec;
  if (!fs::is_regular_file(manifest, ec)) {
    fail(ErrorCode::MissingManifest, "no " + std::string(kManifestFile) + " in " + dir.string());
  }
  std::istringstream in(read_file(manifest));
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw SchemaViolation("<manifest>", "header", "empty manifest");
  ++line_no;
  ojson header;
  try {
    header = ojson::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw SchemaViolation("<manifest>", "header", "malformed header line");
  }
  if (!header.is_object() || header.value("format", "") != "expforce-pool") {
    throw SchemaViolation("<manifest>", "format", "not an expforce pool manifest");
  }
  int version = required<int>(header, "<manifest>", "manifest_version");
  if (version != Pool::kManifestVersion) {
    throw SchemaViolation("<manifest>", "manifest_version",
                          "unsupported version " + std::to_string(version));
  }
  auto expected = required<std::size_t>(header, "<manifest>", "records");

  std::vector<ExperienceRecord> records;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw SchemaViolation("<line " + std::to_string(line_no) + ">", "<record>", "malformed line");
    }
    ExperienceRecord r = record_from_json(j, line_no);
    validate_record(r, dir);
    if (!seen.insert(r.id).second) throw SchemaViolation(r.id, "id", "duplicate id");
    records.push_back(std::move(r));
  }
  if (records.size() != expected) {
    throw SchemaViolation("<manifest>", "records",
                          "header announces " + std::to_string(expected) + " records, found " +
                              std::to_string(records.size()));
  }
  return Pool(std::move(records), dir, version);
}

void save_pool(const Pool& pool, const fs::path& dir) {
  std::unordered_set<std::string> seen;
  for (const auto& r : pool.records()) {
    if (!seen.insert(r.id).second) fail(ErrorCode::DuplicateId, "duplicate record id '" + r.id + "'");
    validate_record(r);
  }
  std::error_code ec;
  fs::create_directories(dir / kImagesDir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + (dir / kImagesDir).string());

  bool same_root = !pool.root().empty() && fs::exists(pool.root()) &&
                   fs::equivalent(pool.root(), dir, ec);
  if (!same_root && !pool.root().empty()) {
    for (const auto& r : pool.records()) {
      write_file_atomic(dir / r.image_ref, pool.read_image(r));
    }
  }
  write_file_atomic(dir / kManifestFile, serialize_manifest(pool));
}

std::vector<Fold> partition_folds(const Pool& pool, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) fail(ErrorCode::InvalidArgument, "n_folds must be at least 2");
  const std::size_t n = pool.size();
  if (n < static_cast<std::size_t>(n_folds)) {
    fail(ErrorCode::TooFewRecords, std::to_string(n) + " records cannot fill " +
                                       std::to_string(n_folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, fnv1a64("folds")));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  const auto folds = static_cast<std::size_t>(n_folds);
  const std::size_t base = n / folds;
  const std::size_t extra = n % folds;
  std::vector<int> fold_of(n, 0);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[order[pos++]] = static_cast<int>(f);
  }

  std::vector<Fold> out(folds);
  const auto& records = pool.records();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < folds; ++f) {
      if (fold_of[i] == static_cast<int>(f)) {
        out[f].query_ids.push_back(records[i].id);
      } else {
        out[f].pool_ids.push_back(records[i].id);
      }
    }
  }
  return out;
}

std::string pool_digest(const Pool& pool) {
  Sha256 h;
  h.update_field(serialize_manifest(pool));
  for (const auto& r : pool.records()) {
    std::error_code ec;
    if (!pool.root().empty() && fs::is_regular_file(pool.image_path(r), ec)) {
      h.update_field(pool.read_image(r));
    } else {
      h.update_field("");
    }
  }
  return h.hex_digest();
}

}  // namespace expforce
