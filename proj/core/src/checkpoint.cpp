#include "xva/checkpoint.hpp"

#include <charconv>
#include <cstring>

#include "xva/error.hpp"
#include "xva/io.hpp"

namespace xva {

namespace {

constexpr std::string_view kMagic = "XVAM";

std::uint64_t parse_uint(const std::map<std::string, std::string>& cfg,
                         const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw ConfigError("checkpoint config is missing '" + key + "'");
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("checkpoint config '" + key + "' is not an integer: " + s);
  }
  return v;
}

bool parse_bool(const std::map<std::string, std::string>& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw ConfigError("checkpoint config is missing '" + key + "'");
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("checkpoint config '" + key + "' is not a boolean: " + it->second);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename Layer>
LayerRecord record_of(LayerKind kind, const Layer& layer) {
  LayerRecord rec{kind, layer.geometry(), {}};
  for (const auto* p : layer.parameters()) rec.params.push_back(p->value);
  return rec;
}

LayerRecord record_of_se(const SEBlock<float>& se) {
  return {LayerKind::kSqueezeExcite,
          {static_cast<std::uint32_t>(se.channels()),
           static_cast<std::uint32_t>(se.reduction())},
          {se.w1.value, se.w2.value}};
}

void check_record(const LayerRecord& rec, LayerKind kind,
                  const std::vector<std::uint32_t>& geometry, std::size_t index) {
  if (rec.kind != kind || rec.geometry != geometry) {
    throw IoError("checkpoint layer " + std::to_string(index) +
                  " does not match the geometry implied by its config");
  }
}

void restore_params(const LayerRecord& rec, std::vector<Parameter<float>*> params,
                    std::size_t index) {
  if (rec.params.size() != params.size()) {
    throw IoError("checkpoint layer " + std::to_string(index) + " has " +
                  std::to_string(rec.params.size()) + " parameter tensors, expected " +
                  std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (rec.params[i].shape() != params[i]->value.shape()) {
      throw IoError("checkpoint layer " + std::to_string(index) +
                    ": parameter shape " + shape_string(rec.params[i].shape()) +
                    " does not match " + shape_string(params[i]->value.shape()));
    }
    params[i]->value = rec.params[i];
    params[i]->zero_grad();
    params[i]->reset_optimizer();
  }
}

template <typename Layer>
void restore(const LayerRecord& rec, LayerKind kind, Layer& layer, std::size_t index) {
  check_record(rec, kind, layer.geometry(), index);
  restore_params(rec, layer.parameters(), index);
}

void restore_se(const LayerRecord& rec, SEBlock<float>& se, std::size_t index) {
  check_record(rec, LayerKind::kSqueezeExcite,
               {static_cast<std::uint32_t>(se.channels()),
                static_cast<std::uint32_t>(se.reduction())},
               index);
  restore_params(rec, se.parameters(), index);
}

void expect_kind(const Checkpoint& ckpt, ModelKind kind) {
  if (ckpt.kind != kind) {
    throw IoError("checkpoint holds a " + std::string(model_kind_name(ckpt.kind)) +
                  " model, expected " + std::string(model_kind_name(kind)));
  }
}

void expect_kind(const Checkpoint& ckpt, ModelKind kind, std::size_t layer_count) {
  expect_kind(ckpt, kind);
  if (ckpt.layers.size() != layer_count) {
    throw IoError("checkpoint has " + std::to_string(ckpt.layers.size()) +
                  " layer records, expected " + std::to_string(layer_count));
  }
}

void merge_extra(Checkpoint& ckpt, const std::map<std::string, std::string>& extra) {
  for (const auto& [k, v] : extra) ckpt.config.try_emplace(k, v);
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAutoencoder: return "ae";
    case ModelKind::kPerceptual: return "perceptual";
    case ModelKind::kClassifier: return "classifier";
  }
  return "unknown";
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::string config_text;
  for (const auto& [k, v] : ckpt.config) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw UsageError("checkpoint config entry '" + k + "' is not a flat key=value pair");
    }
    config_text += k + "=" + v + "\n";
  }
  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u8(static_cast<std::uint8_t>(ckpt.kind));
  w.put_u32(static_cast<std::uint32_t>(config_text.size()));
  w.put_bytes(config_text);
  w.put_u32(static_cast<std::uint32_t>(ckpt.layers.size()));
  for (const auto& rec : ckpt.layers) {
    w.put_u8(static_cast<std::uint8_t>(rec.kind));
    w.put_u32(static_cast<std::uint32_t>(rec.geometry.size()));
    for (auto g : rec.geometry) w.put_u32(g);
    w.put_u32(static_cast<std::uint32_t>(rec.params.size()));
    for (const auto& p : rec.params) {
      w.put_u8(static_cast<std::uint8_t>(p.rank()));
      for (std::size_t d = 0; d < p.rank(); ++d) {
        w.put_u32(static_cast<std::uint32_t>(p.dim(d)));
      }
      for (float x : p.data()) w.put_f32(x);
    }
  }
  w.put_crc();
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < kMagic.size() ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw IoError(source + ": not a checkpoint (bad magic)");
  }
  io::ByteReader r(io::check_crc(bytes, source), source);
  r.bytes(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(ModelKind::kClassifier)) r.fail("unknown model kind");
  ckpt.kind = static_cast<ModelKind>(kind);

  const auto text_bytes = r.bytes(r.u32());
  const std::string text(text_bytes.begin(), text_bytes.end());
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string::npos) r.fail("malformed config block");
    const std::string line = text.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) r.fail("malformed config line '" + line + "'");
    if (!ckpt.config.emplace(line.substr(0, eq), line.substr(eq + 1)).second) {
      r.fail("duplicate config key");
    }
    start = end + 1;
  }

  const std::size_t n_layers = r.u32();
  for (std::size_t i = 0; i < n_layers; ++i) {
    LayerRecord rec;
    const std::uint8_t lk = r.u8();
    if (lk < 1 || lk > static_cast<std::uint8_t>(LayerKind::kSqueezeExcite)) {
      r.fail("unknown layer kind");
    }
    rec.kind = static_cast<LayerKind>(lk);
    const std::size_t n_geom = r.u32();
    if (n_geom * 4 > r.remaining()) r.fail("truncated file");
    for (std::size_t g = 0; g < n_geom; ++g) rec.geometry.push_back(r.u32());
    const std::size_t n_params = r.u32();
    if (n_params > r.remaining()) r.fail("truncated file");
    for (std::size_t p = 0; p < n_params; ++p) {
      const std::size_t rank = r.u8();
      if (rank == 0) r.fail("zero-rank parameter tensor");
      Shape shape;
      std::size_t numel = 1;
      for (std::size_t d = 0; d < rank; ++d) {
        shape.push_back(r.u32());
        if (shape.back() == 0) r.fail("zero extent in parameter tensor");
        numel *= shape.back();
        if (numel * 4 > r.remaining()) r.fail("declared size exceeds payload");
      }
      std::vector<float> data(numel);
      for (auto& x : data) x = r.f32();
      rec.params.emplace_back(std::move(shape), std::move(data));
    }
    ckpt.layers.push_back(std::move(rec));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last layer");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("checkpoint not found: " + path.string());
  }
  return decode_checkpoint(io::read_file(path), path.string());
}

// --- Autoencoder ---------------------------------------------------------------

AEConfig ae_config_from(const std::map<std::string, std::string>& config) {
  AEConfig c;
  c.nz = parse_uint(config, "nz");
  c.height = parse_uint(config, "height");
  c.width = parse_uint(config, "width");
  return c;
}

Checkpoint to_checkpoint(const AEModel<float>& model,
                         const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kAutoencoder;
  const auto& c = model.config();
  ckpt.config = {{"nz", std::to_string(c.nz)},
                 {"height", std::to_string(c.height)},
                 {"width", std::to_string(c.width)}};
  merge_extra(ckpt, extra);
  for (const auto& l : model.encoder) ckpt.layers.push_back(record_of(LayerKind::kConv2d, l));
  ckpt.layers.push_back(record_of(LayerKind::kLinear, model.bottleneck));
  ckpt.layers.push_back(record_of(LayerKind::kLinear, model.expand));
  for (const auto& l : model.decoder) {
    ckpt.layers.push_back(record_of(LayerKind::kConvTranspose2d, l));
  }
  return ckpt;
}

AEModel<float> ae_from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, ModelKind::kAutoencoder);
  AEModel<float> model(ae_config_from(ckpt.config));
  expect_kind(ckpt, ModelKind::kAutoencoder, kEncoderDepth + 2 + kDecoderDepth);
  std::size_t i = 0;
  for (auto& l : model.encoder) restore(ckpt.layers[i], LayerKind::kConv2d, l, i), ++i;
  restore(ckpt.layers[i], LayerKind::kLinear, model.bottleneck, i), ++i;
  restore(ckpt.layers[i], LayerKind::kLinear, model.expand, i), ++i;
  for (auto& l : model.decoder) {
    restore(ckpt.layers[i], LayerKind::kConvTranspose2d, l, i), ++i;
  }
  return model;
}

// --- Perceptual extractor ------------------------------------------------------

Checkpoint to_checkpoint(const PerceptualExtractor<float>& phi,
                         const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kPerceptual;
  ckpt.config = {{"provenance", phi.provenance == Provenance::kRandomSeeded ? "random" : "file"},
                 {"seed", std::to_string(phi.seed)}};
  merge_extra(ckpt, extra);
  for (const auto& l : phi.layers) ckpt.layers.push_back(record_of(LayerKind::kConv2d, l));
  return ckpt;
}

PerceptualExtractor<float> perceptual_from_checkpoint(const Checkpoint& ckpt) {
  PerceptualExtractor<float> phi;
  expect_kind(ckpt, ModelKind::kPerceptual, phi.layers.size());
  for (std::size_t i = 0; i < phi.layers.size(); ++i) {
    restore(ckpt.layers[i], LayerKind::kConv2d, phi.layers[i], i);
  }
  phi.provenance = Provenance::kLoadedFromFile;
  phi.seed = parse_uint(ckpt.config, "seed");
  return phi;
}

// --- Classifier ----------------------------------------------------------------

ClassifierConfig classifier_config_from(const std::map<std::string, std::string>& config) {
  ClassifierConfig c;
  c.nz = parse_uint(config, "nz");
  c.views = parse_uint(config, "views");
  c.use_xva = parse_bool(config, "use_xva");
  c.use_se = parse_bool(config, "use_se");
  c.se_reduction = parse_uint(config, "se_reduction");
  c.stem_channels = parse_uint(config, "stem_channels");
  c.head_channels = parse_uint(config, "head_channels");
  c.kernel = parse_uint(config, "kernel");
  c.seed = parse_uint(config, "seed");
  return c;
}

Checkpoint to_checkpoint(const ClassifierModel<float>& model,
                         const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kClassifier;
  const auto& c = model.config();
  ckpt.config = {{"nz", std::to_string(c.nz)},
                 {"views", std::to_string(c.views)},
                 {"use_xva", bool_str(c.use_xva)},
                 {"use_se", bool_str(c.use_se)},
                 {"se_reduction", std::to_string(c.se_reduction)},
                 {"stem_channels", std::to_string(c.stem_channels)},
                 {"head_channels", std::to_string(c.head_channels)},
                 {"kernel", std::to_string(c.kernel)},
                 {"seed", std::to_string(c.seed)}};
  merge_extra(ckpt, extra);
  auto add_block = [&ckpt](const ConvBlock<float>& b) {
    ckpt.layers.push_back(record_of(LayerKind::kConv1d, b.conv));
    ckpt.layers.push_back(record_of_se(b.se));
  };
  for (const auto& stem : model.stems) {
    for (const auto& b : stem) add_block(b);
  }
  add_block(model.post);
  ckpt.layers.push_back(record_of(LayerKind::kLinear, model.head));
  return ckpt;
}

ClassifierModel<float> classifier_from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, ModelKind::kClassifier);
  ClassifierModel<float> model(classifier_config_from(ckpt.config));
  std::size_t blocks = 1;
  for (const auto& stem : model.stems) blocks += stem.size();
  expect_kind(ckpt, ModelKind::kClassifier, 2 * blocks + 1);
  std::size_t i = 0;
  auto restore_block = [&](ConvBlock<float>& b) {
    restore(ckpt.layers[i], LayerKind::kConv1d, b.conv, i);
    ++i;
    restore_se(ckpt.layers[i], b.se, i);
    ++i;
  };
  for (auto& stem : model.stems) {
    for (auto& b : stem) restore_block(b);
  }
  restore_block(model.post);
  restore(ckpt.layers[i], LayerKind::kLinear, model.head, i);
  return model;
}

}  // namespace xva
