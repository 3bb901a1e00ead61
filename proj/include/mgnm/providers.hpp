#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgnm/autodiff.hpp"
#include "mgnm/geometry.hpp"
#include "mgnm/registry.hpp"

namespace mgnm {

class ParameterStore;

// ---- detection filtering ----------------------------------------------------

struct DetectionPolicy {
  double score_threshold = 0.2;
  int max_persons = 15;
  int max_objects = 15;

  void validate() const;
};

/// Keeps detections scoring at least the threshold, caps persons and objects
/// separately, and orders persons first, each group by descending score then
/// input position.
DetectionSet filter_detections(std::span<const Detection> raw, const DetectionPolicy& policy);

// ---- prompts ------------------------------------------------------------------

/// Lowercases and replaces underscores with spaces.
std::string normalize_category_name(std::string_view name);
/// "a photo of a <category>". Throws UnknownCategory for names not in the registry.
std::string category_prompt(const NameRegistry& categories, std::string_view name);
/// "a photo of a person interacting with <category>".
std::string interaction_prompt(const NameRegistry& categories, std::string_view name);

// ---- embedding providers -----------------------------------------------------------

enum class EmbeddingKind : std::uint32_t {
  VisualImage = 0,
  TextCategory = 1,
  TextInteraction = 2,
  BackboneMap = 3,
  NodeAppearance = 4,
};

enum class ProviderSource { Stub, File };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view text);

/// Read-only source of frozen embeddings. Lookups return rows x dim (a single
/// row for everything except backbone maps).
class EmbeddingProvider {
 public:
  EmbeddingProvider(EmbeddingKind kind, int dim) : kind_(kind), dim_(dim) {}
  virtual ~EmbeddingProvider() = default;

  EmbeddingKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  virtual ProviderSource source() const noexcept = 0;
  virtual Matrix lookup(std::string_view key) const = 0;

 private:
  EmbeddingKind kind_;
  int dim_;
};

/// Deterministic stand-in: the key hash seeds a counter-based generator. Vectors
/// are unit-norm; backbone maps are grid*grid rows of standard normal entries.
class StubProvider final : public EmbeddingProvider {
 public:
  StubProvider(EmbeddingKind kind, int dim, std::uint64_t seed, int grid = 7);

  ProviderSource source() const noexcept override { return ProviderSource::Stub; }
  Matrix lookup(std::string_view key) const override;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  int grid_;
};

/// Embeddings loaded from a container file (layout in docs/FORMATS.md).
class FileProvider final : public EmbeddingProvider {
 public:
  FileProvider(EmbeddingKind kind, int dim, std::map<std::string, Matrix, std::less<>> records);

  /// Throws ConfigError when the file's kind or dim disagrees with the expectation.
  static std::shared_ptr<FileProvider> load(const std::filesystem::path& path,
                                            std::optional<EmbeddingKind> expected_kind = {},
                                            std::optional<int> expected_dim = {});

  ProviderSource source() const noexcept override { return ProviderSource::File; }
  Matrix lookup(std::string_view key) const override;
  bool contains(std::string_view key) const { return records_.find(key) != records_.end(); }
  std::size_t size() const noexcept { return records_.size(); }
  const std::map<std::string, Matrix, std::less<>>& records() const noexcept { return records_; }

 private:
  std::map<std::string, Matrix, std::less<>> records_;
};

void save_embeddings(const std::filesystem::path& path, EmbeddingKind kind, int dim,
                     const std::map<std::string, Matrix, std::less<>>& records);

Matrix visual_embedding(const EmbeddingProvider& provider, std::string_view image_key);
Matrix text_embedding(const EmbeddingProvider& provider, std::string_view prompt);
Matrix backbone_map(const EmbeddingProvider& provider, std::string_view image_key);
/// Throws MissingEmbedding when det_index is outside [0, det_count).
Matrix node_appearance(const EmbeddingProvider& provider, std::string_view image_key, int det_index,
                       int det_count);
std::string appearance_key(std::string_view image_key, int det_index);
/// Appearance lookup by an explicit key.
Matrix node_appearance(const EmbeddingProvider& provider, std::string_view key);

struct ProviderConfig {
  ProviderSource source = ProviderSource::Stub;
  std::uint64_t seed = 0;
  int node_dim = 64;
  int visual_dim = 64;
  int text_dim = 64;
  int backbone_dim = 64;
  int backbone_grid = 7;
  /// Embedding files per kind, used when source == File.
  std::map<std::string, std::string> files;
  /// Optional category -> text key overrides; the prompt is the default key.
  std::map<std::string, std::string> text_keys;
  std::map<std::string, std::string> interaction_keys;

  friend bool operator==(const ProviderConfig&, const ProviderConfig&) = default;
};

/// The five frozen feature sources threaded through the pipeline.
struct ProviderSet {
  std::shared_ptr<const EmbeddingProvider> visual;
  std::shared_ptr<const EmbeddingProvider> text_category;
  std::shared_ptr<const EmbeddingProvider> text_interaction;
  std::shared_ptr<const EmbeddingProvider> backbone;
  std::shared_ptr<const EmbeddingProvider> appearance;
  std::map<std::string, std::string> text_keys;
  std::map<std::string, std::string> interaction_keys;

  static ProviderSet from_config(const ProviderConfig& config,
                                 const std::filesystem::path& base_dir = {});

  /// Embedding of the category prompt (or its manifest override key).
  Matrix category_text(const NameRegistry& categories, CategoryId id) const;
  Matrix interaction_text(const NameRegistry& categories, CategoryId id) const;
};

// ---- adapter ---------------------------------------------------------------------

/// Bottleneck residual adapter: rho * up(relu(down(e))) + (1 - rho) * e with
/// rho clamped to [0, 1].
struct AdapterBlock {
  std::string name;
  int dim = 64;

  void register_parameters(ParameterStore& store, bool trainable_mix = true, double mix = 0.5) const;
  ad::Var apply(ad::Tape& tape, ParameterStore& store, const ad::Var& e) const;
};

inline ad::Var apply_adapter(const AdapterBlock& block, ad::Tape& tape, ParameterStore& store,
                             const ad::Var& e) {
  return block.apply(tape, store, e);
}

}  // namespace mgnm
