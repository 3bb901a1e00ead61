#include "mgnm/providers.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "mgnm/errors.hpp"
#include "mgnm/nn.hpp"
#include "mgnm/parameter_store.hpp"
#include "mgnm/rng.hpp"

namespace mgnm {

namespace {
constexpr char kEmbeddingsMagic[9] = "MGNMEMBD";
constexpr std::uint32_t kEmbeddingsVersion = 1;

void require_kind(const EmbeddingProvider& p, std::initializer_list<EmbeddingKind> kinds) {
  for (EmbeddingKind k : kinds) {
    if (p.kind() == k) return;
  }
  throw ConfigError("provider of kind '" + std::string(to_string(p.kind())) + "' used for the wrong lookup");
}
}  // namespace

void DetectionPolicy::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) throw ConfigError("score_threshold must lie in [0, 1]");
  if (max_persons < 1 || max_objects < 1) throw ConfigError("detection caps must be at least 1");
}

DetectionSet filter_detections(std::span<const Detection> raw, const DetectionPolicy& policy) {
  policy.validate();
  std::vector<std::size_t> persons;
  std::vector<std::size_t> objects;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].score < policy.score_threshold) continue;
    (raw[i].is_person() ? persons : objects).push_back(i);
  }
  auto by_score = [&](std::size_t a, std::size_t b) {
    if (raw[a].score != raw[b].score) return raw[a].score > raw[b].score;
    return a < b;
  };
  std::sort(persons.begin(), persons.end(), by_score);
  std::sort(objects.begin(), objects.end(), by_score);
  persons.resize(std::min(persons.size(), static_cast<std::size_t>(policy.max_persons)));
  objects.resize(std::min(objects.size(), static_cast<std::size_t>(policy.max_objects)));

  DetectionSet out;
  out.reserve(persons.size() + objects.size());
  for (std::size_t i : persons) out.push_back(raw[i]);
  for (std::size_t i : objects) out.push_back(raw[i]);
  return out;
}

std::string normalize_category_name(std::string_view name) {
  std::string out(name);
  for (char& c : out) {
    c = (c == '_') ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string category_prompt(const NameRegistry& categories, std::string_view name) {
  if (!categories.find(name)) throw UnknownCategory("unknown category '" + std::string(name) + "'");
  return "a photo of a " + normalize_category_name(name);
}

std::string interaction_prompt(const NameRegistry& categories, std::string_view name) {
  if (!categories.find(name)) throw UnknownCategory("unknown category '" + std::string(name) + "'");
  return "a photo of a person interacting with " + normalize_category_name(name);
}

std::string_view to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::VisualImage: return "visual-image";
    case EmbeddingKind::TextCategory: return "text-category";
    case EmbeddingKind::TextInteraction: return "text-interaction";
    case EmbeddingKind::BackboneMap: return "backbone-map";
    case EmbeddingKind::NodeAppearance: return "node-appearance";
  }
  return "unknown";
}

EmbeddingKind parse_embedding_kind(std::string_view text) {
  for (auto k : {EmbeddingKind::VisualImage, EmbeddingKind::TextCategory, EmbeddingKind::TextInteraction,
                 EmbeddingKind::BackboneMap, EmbeddingKind::NodeAppearance}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown embedding kind '" + std::string(text) + "'");
}

StubProvider::StubProvider(EmbeddingKind kind, int dim, std::uint64_t seed, int grid)
    : EmbeddingProvider(kind, dim), seed_(seed), grid_(grid) {
  if (dim < 1) throw ConfigError("embedding dim must be positive");
  if (grid < 1) throw ConfigError("backbone grid must be positive");
}

Matrix StubProvider::lookup(std::string_view key) const {
  const std::uint64_t stream = rng::hash(key, seed_);
  if (kind() == EmbeddingKind::BackboneMap) {
    Matrix map(static_cast<Eigen::Index>(grid_) * grid_, dim());
    for (Eigen::Index i = 0; i < map.size(); ++i) {
      map.data()[i] = rng::normal(stream, 2 * static_cast<std::uint64_t>(i));
    }
    return map;
  }
  Matrix v(1, dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng::normal(stream, 2 * static_cast<std::uint64_t>(i));
  const double norm = v.norm();
  v /= norm > 0.0 ? norm : 1.0;
  return v;
}

FileProvider::FileProvider(EmbeddingKind kind, int dim, std::map<std::string, Matrix, std::less<>> records)
    : EmbeddingProvider(kind, dim), records_(std::move(records)) {
  for (const auto& [key, m] : records_) {
    if (m.cols() != dim) throw ConfigError("embedding '" + key + "' has width " + std::to_string(m.cols()));
  }
}

Matrix FileProvider::lookup(std::string_view key) const {
  auto it = records_.find(key);
  if (it == records_.end()) {
    throw MissingEmbedding("no " + std::string(to_string(kind())) + " embedding for key '" + std::string(key) + "'");
  }
  return it->second;
}

void save_embeddings(const std::filesystem::path& path, EmbeddingKind kind, int dim,
                     const std::map<std::string, Matrix, std::less<>>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open embeddings file for writing: " + path.string());
  binary::put_magic(out, kEmbeddingsMagic);
  binary::put_uint<std::uint32_t>(out, kEmbeddingsVersion);
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [key, m] : records) {
    if (m.cols() != dim) throw ShapeError("embedding '" + key + "' does not have width " + std::to_string(dim));
    binary::put_string(out, key);
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::put_f32(out, m.data()[i]);
  }
  if (!out) throw Error("failed writing embeddings file: " + path.string());
}

std::shared_ptr<FileProvider> FileProvider::load(const std::filesystem::path& path,
                                                 std::optional<EmbeddingKind> expected_kind,
                                                 std::optional<int> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embeddings file: " + path.string());
  binary::expect_magic(in, kEmbeddingsMagic, "embeddings");
  const auto version = binary::get_uint<std::uint32_t>(in, "version");
  if (version != kEmbeddingsVersion) throw VersionError("unsupported embeddings version " + std::to_string(version));
  const auto raw_kind = binary::get_uint<std::uint32_t>(in, "kind");
  if (raw_kind > static_cast<std::uint32_t>(EmbeddingKind::NodeAppearance)) {
    throw ParseError("unknown embedding kind code " + std::to_string(raw_kind));
  }
  const auto kind = static_cast<EmbeddingKind>(raw_kind);
  const auto dim = static_cast<int>(binary::get_uint<std::uint32_t>(in, "dim"));
  const auto count = binary::get_uint<std::uint32_t>(in, "count");
  if (expected_kind && *expected_kind != kind) {
    throw ConfigError("embeddings file holds '" + std::string(to_string(kind)) + "', expected '" +
                      std::string(to_string(*expected_kind)) + "'");
  }
  if (expected_dim && *expected_dim != dim) {
    throw ConfigError("embeddings file has dim " + std::to_string(dim) + ", expected " + std::to_string(*expected_dim));
  }
  std::map<std::string, Matrix, std::less<>> records;
  for (std::uint32_t r = 0; r < count; ++r) {
    try {
      std::string key = binary::get_string(in, "key");
      const auto rows = binary::get_uint<std::uint32_t>(in, "rows");
      Matrix m(rows, dim);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binary::get_f32(in, "vector");
      records.emplace(std::move(key), std::move(m));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), static_cast<std::ptrdiff_t>(r));
    }
  }
  return std::make_shared<FileProvider>(kind, dim, std::move(records));
}

Matrix visual_embedding(const EmbeddingProvider& provider, std::string_view image_key) {
  require_kind(provider, {EmbeddingKind::VisualImage});
  return provider.lookup(image_key);
}

Matrix text_embedding(const EmbeddingProvider& provider, std::string_view prompt) {
  require_kind(provider, {EmbeddingKind::TextCategory, EmbeddingKind::TextInteraction});
  return provider.lookup(prompt);
}

Matrix backbone_map(const EmbeddingProvider& provider, std::string_view image_key) {
  require_kind(provider, {EmbeddingKind::BackboneMap});
  return provider.lookup(image_key);
}

std::string appearance_key(std::string_view image_key, int det_index) {
  return std::string(image_key) + "#" + std::to_string(det_index);
}

Matrix node_appearance(const EmbeddingProvider& provider, std::string_view image_key, int det_index,
                       int det_count) {
  require_kind(provider, {EmbeddingKind::NodeAppearance});
  if (det_index < 0 || det_index >= det_count) {
    throw MissingEmbedding("detection index " + std::to_string(det_index) + " out of range for '" +
                           std::string(image_key) + "'");
  }
  return provider.lookup(appearance_key(image_key, det_index));
}

Matrix node_appearance(const EmbeddingProvider& provider, std::string_view key) {
  require_kind(provider, {EmbeddingKind::NodeAppearance});
  return provider.lookup(key);
}

ProviderSet ProviderSet::from_config(const ProviderConfig& config, const std::filesystem::path& base_dir) {
  ProviderSet set;
  set.text_keys = config.text_keys;
  set.interaction_keys = config.interaction_keys;
  auto make = [&](EmbeddingKind kind, int dim) -> std::shared_ptr<const EmbeddingProvider> {
    if (config.source == ProviderSource::Stub) {
      // Each kind draws from its own stream so that equal keys never alias across kinds.
      const std::uint64_t seed = rng::hash(to_string(kind), config.seed);
      return std::make_shared<StubProvider>(kind, dim, seed, config.backbone_grid);
    }
    auto it = config.files.find(std::string(to_string(kind)));
    if (it == config.files.end()) {
      throw ConfigError("no embeddings file configured for '" + std::string(to_string(kind)) + "'");
    }
    std::filesystem::path path = it->second;
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return FileProvider::load(path, kind, dim);
  };
  set.visual = make(EmbeddingKind::VisualImage, config.visual_dim);
  set.text_category = make(EmbeddingKind::TextCategory, config.text_dim);
  set.text_interaction = make(EmbeddingKind::TextInteraction, config.text_dim);
  set.backbone = make(EmbeddingKind::BackboneMap, config.backbone_dim);
  set.appearance = make(EmbeddingKind::NodeAppearance, config.node_dim);
  return set;
}

Matrix ProviderSet::category_text(const NameRegistry& categories, CategoryId id) const {
  const std::string& name = categories.name(id);
  auto it = text_keys.find(name);
  return text_embedding(*text_category, it != text_keys.end() ? it->second : category_prompt(categories, name));
}

Matrix ProviderSet::interaction_text(const NameRegistry& categories, CategoryId id) const {
  const std::string& name = categories.name(id);
  auto it = interaction_keys.find(name);
  return text_embedding(*text_interaction,
                        it != interaction_keys.end() ? it->second : interaction_prompt(categories, name));
}

void AdapterBlock::register_parameters(ParameterStore& store, bool trainable_mix, double mix) const {
  const int hidden = std::max(1, dim / 4);
  nn::register_linear(store, name + ".down", dim, hidden);
  nn::register_linear(store, name + ".up", hidden, dim);
  store.add_constant(name + ".rho", 1, 1, mix, trainable_mix);
}

ad::Var AdapterBlock::apply(ad::Tape& tape, ParameterStore& store, const ad::Var& e) const {
  if (e.cols() != dim) throw ShapeError(name + ": adapter expects width " + std::to_string(dim));
  const ad::Var rho = ad::clamp(tape.param(store, name + ".rho"), 0.0, 1.0);
  const ad::Var adapted = nn::linear(tape, store, name + ".up", ad::relu(nn::linear(tape, store, name + ".down", e)));
  // (1 - rho) * e written as e - rho * e keeps rho = 0 bit-exact.
  return ad::add(ad::scale_by(adapted, rho), ad::sub(e, ad::scale_by(e, rho)));
}

}  // namespace mgnm
