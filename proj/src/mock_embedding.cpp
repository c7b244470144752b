#include <cctype>
#include <cmath>
#include <regex>
#include <string>

#include "expforce/errors.hpp"
#include "expforce/hashing.hpp"
#include "expforce/model_gateway.hpp"

namespace expforce {
namespace {

constexpr std::size_t kNoiseDims = 16;
constexpr std::size_t kBandDims = 4;

const std::regex& band_pattern() {
  static const std::regex re(R"((mass|grip)-band\s+(\d+)\s*/\s*(\d+))");
  return re;
}

void normalize(std::vector<double>& v, std::size_t begin, std::size_t end, double target) {
  double sq = 0.0;
  for (std::size_t i = begin; i < end; ++i) sq += v[i] * v[i];
  if (sq == 0.0) return;
  double scale = target / std::sqrt(sq);
  for (std::size_t i = begin; i < end; ++i) v[i] *= scale;
}

}  // namespace

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ < kMinDimension) {
    fail(ErrorCode::InvalidArgument,
         "mock embedding dimension must be at least " + std::to_string(kMinDimension));
  }
}

std::string MockEmbeddingProvider::provider_id() const {
  return "mock-v1-d" + std::to_string(dimension_);
}

EmbeddingVector MockEmbeddingProvider::do_embed(std::string_view image, std::string_view description) {
  std::vector<double> v(dimension_, 0.0);
  const std::string desc(description);

  for (auto it = std::sregex_iterator(desc.begin(), desc.end(), band_pattern());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    double angle = (std::stod(m[2].str()) + 0.5) * kBandAngleStep;
    std::size_t offset = m[1].str() == "mass" ? 0 : 2;
    v[offset] = std::cos(angle);
    v[offset + 1] = std::sin(angle);
  }

  const std::size_t text_begin = kBandDims;
  const std::size_t text_end = dimension_ - kNoiseDims;
  std::string stripped = std::regex_replace(desc, band_pattern(), " ");
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::uint64_t h = fnv1a64(token);
    std::size_t slot = text_begin + static_cast<std::size_t>(h % (text_end - text_begin));
    v[slot] += (h >> 63) != 0 ? -1.0 : 1.0;
    token.clear();
  };
  for (char c : stripped) {
    if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  normalize(v, text_begin, text_end, 1.0);

  Sha256 h;
  h.update_field(image).update_field(description);
  std::string digest = h.hex_digest();
  for (std::size_t i = 0; i < kNoiseDims; ++i) {
    int byte = std::stoi(digest.substr(2 * i, 2), nullptr, 16);
    v[text_end + i] = (static_cast<double>(byte) - 127.5) / 127.5;
  }
  normalize(v, text_end, dimension_, kNoiseNorm);

  return EmbeddingVector(std::move(v), provider_id());
}

}  // namespace expforce
