#include "pcdm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pcdm/error.hpp"

namespace pcdm {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  int base = 10;
  std::string_view sv(v);
  if (sv.size() > 2 && sv[0] == '0' && (sv[1] == 'x' || sv[1] == 'X')) {
    base = 16;
    sv.remove_prefix(2);
  }
  const auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), out, base);
  if (ec != std::errc() || p != sv.data() + sv.size()) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_f64(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::GaussianMixture:
      return "gmm";
    case DatasetKind::Checkerboard:
      return "checkerboard";
    case DatasetKind::Directory:
      return "directory";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gmm" || name == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (name == "checkerboard") return DatasetKind::Checkerboard;
  if (name == "directory" || name == "dir") return DatasetKind::Directory;
  throw ConfigError("unknown dataset '" + name + "' (expected gmm, checkerboard or directory)");
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "hierarchy") c.hierarchy = parse_hierarchy_kind(v);
  else if (key == "levels") c.levels = to_size(key, v);
  else if (key == "height") c.height = to_size(key, v);
  else if (key == "width") c.width = to_size(key, v);
  else if (key == "channels") c.channels = to_size(key, v);
  else if (key == "T") c.T = to_size(key, v);
  else if (key == "gamma_min") c.gamma_min = to_f64(key, v);
  else if (key == "gamma_max") c.gamma_max = to_f64(key, v);
  else if (key == "decoder_var") {
    if (v.empty() || v == "default") c.decoder_var.reset();
    else c.decoder_var = to_f64(key, v);
  } else if (key == "widths") {
    c.widths.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) c.widths.push_back(to_size(key, trim(item)));
  } else if (key == "lr") c.lr = to_f64(key, v);
  else if (key == "batch") c.batch = to_size(key, v);
  else if (key == "steps") c.steps = to_size(key, v);
  else if (key == "weight_decay") c.weight_decay = to_f64(key, v);
  else if (key == "log_every") c.log_every = to_size(key, v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "dataset") c.dataset = parse_dataset_kind(v);
  else if (key == "dataset_k") c.dataset_k = to_size(key, v);
  else if (key == "dataset_count") c.dataset_count = to_size(key, v);
  else if (key == "eval_count") c.eval_count = to_size(key, v);
  else if (key == "dataset_seed") c.dataset_seed = to_u64(key, v);
  else if (key == "dataset_path") c.dataset_path = v;
  else if (key == "out") c.out = v;
  else if (key == "model") c.model = v;
  else if (key == "cvdm_model") c.cvdm_model = v;
  else if (key == "mc_samples") c.mc_samples = to_size(key, v);
  else if (key == "samples") c.samples = to_size(key, v);
  else if (key == "T_codec") c.T_codec = to_size(key, v);
  else if (key == "latent_delta") c.latent_delta = to_f64(key, v);
  else if (key == "aux_seed") c.aux_seed = to_u64(key, v);
  else if (key == "aux_words") c.aux_words = to_size(key, v);
  else if (key == "compress_count") c.compress_count = to_size(key, v);
  else if (key == "archive") c.archive = v;
  else if (key == "ood_n") c.ood_n = to_size(key, v);
  else if (key == "ood_m") c.ood_m = to_size(key, v);
  else if (key == "ood_count") c.ood_count = to_size(key, v);
  else if (key == "emd_pairs") c.emd_pairs = to_size(key, v);
  else if (key == "emd_grid") c.emd_grid = to_size(key, v);
  else if (key == "emd_p") c.emd_p = to_f64(key, v);
  else if (key == "emd_variant") {
    if (v == "dimension") c.emd_variant = EmdVariant::DimensionExponent;
    else if (v == "literal") c.emd_variant = EmdVariant::PaperLiteral;
    else throw ConfigError("emd_variant: expected dimension or literal, got '" + v + "'");
  } else if (key == "input") c.input = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& is, const std::string& origin) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    try {
      apply_setting(cfg, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  return parse_config(f, path);
}

void ExperimentConfig::validate() const {
  hierarchy_spec().validate();
  diffusion_setup().validate();
  if (widths.empty()) throw ConfigError("widths must list at least one layer");
  for (auto w : widths)
    if (w == 0) throw ConfigError("widths must be positive");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("lr and weight_decay must be nonnegative");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (log_every == 0) throw ConfigError("log_every must be positive");
  if (dataset != DatasetKind::Directory && dataset_k == 0) throw ConfigError("dataset_k must be positive");
  if (dataset == DatasetKind::Directory && dataset_path.empty()) throw ConfigError("dataset=directory needs dataset_path");
  if (T_codec == 0) throw ConfigError("T_codec must be positive");
  if (!(latent_delta > 0.0 && latent_delta <= 1.0)) throw ConfigError("latent_delta must lie in (0, 1]");
  if (ood_n == 0 || ood_m == 0) throw ConfigError("ood_n and ood_m must be positive");
  if (emd_grid == 0 || (emd_grid & (emd_grid - 1))) throw ConfigError("emd_grid must be a power of two");
  if (!(emd_p > 0.0 && emd_p <= 1.0)) throw ConfigError("emd_p must lie in (0, 1]");
  if (out.empty()) throw ConfigError("out must name a directory");
}

HierarchySpec ExperimentConfig::hierarchy_spec() const { return spec_for(hierarchy, {height, width, channels}, levels); }

DiffusionSetup ExperimentConfig::diffusion_setup() const {
  DiffusionSetup s;
  s.schedule.gamma_min = gamma_min;
  s.schedule.gamma_max = gamma_max;
  s.T = T;
  s.decoder_var = decoder_var;
  return s;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.steps = steps;
  t.batch = batch;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.log_every = log_every;
  return t;
}

BbOptions ExperimentConfig::codec_options() const {
  BbOptions o;
  o.delta = latent_delta;
  o.T_codec = T_codec;
  o.aux_seed = aux_seed;
  o.aux_words = aux_words;
  return o;
}

EvalMode ExperimentConfig::eval_mode() const { return mc_samples ? EvalMode::monte_carlo(mc_samples) : EvalMode::full_sum(); }

std::string ExperimentConfig::model_path() const { return model.empty() ? out + "/model.pcdm" : model; }
std::string ExperimentConfig::archive_path() const { return archive.empty() ? out + "/archive.pcdmbb" : archive; }

void ExperimentConfig::write(std::ostream& os) const {
  std::string ws;
  for (std::size_t i = 0; i < widths.size(); ++i) ws += (i ? "," : "") + std::to_string(widths[i]);
  os << "hierarchy=" << to_string(hierarchy) << "\n"
     << "levels=" << levels << "\n"
     << "height=" << height << "\n"
     << "width=" << width << "\n"
     << "channels=" << channels << "\n"
     << "T=" << T << "\n"
     << "gamma_min=" << fmt(gamma_min) << "\n"
     << "gamma_max=" << fmt(gamma_max) << "\n"
     << "decoder_var=" << (decoder_var ? fmt(*decoder_var) : "default") << "\n"
     << "widths=" << ws << "\n"
     << "lr=" << fmt(lr) << "\n"
     << "batch=" << batch << "\n"
     << "steps=" << steps << "\n"
     << "weight_decay=" << fmt(weight_decay) << "\n"
     << "log_every=" << log_every << "\n"
     << "seed=" << seed << "\n"
     << "dataset=" << to_string(dataset) << "\n"
     << "dataset_k=" << dataset_k << "\n"
     << "dataset_count=" << dataset_count << "\n"
     << "eval_count=" << eval_count << "\n"
     << "dataset_seed=" << dataset_seed << "\n"
     << "dataset_path=" << dataset_path << "\n"
     << "out=" << out << "\n"
     << "model=" << model_path() << "\n"
     << "cvdm_model=" << cvdm_model << "\n"
     << "mc_samples=" << mc_samples << "\n"
     << "samples=" << samples << "\n"
     << "T_codec=" << T_codec << "\n"
     << "latent_delta=" << fmt(latent_delta) << "\n"
     << "aux_seed=" << aux_seed << "\n"
     << "aux_words=" << aux_words << "\n"
     << "compress_count=" << compress_count << "\n"
     << "archive=" << archive_path() << "\n"
     << "ood_n=" << ood_n << "\n"
     << "ood_m=" << ood_m << "\n"
     << "ood_count=" << ood_count << "\n"
     << "emd_pairs=" << emd_pairs << "\n"
     << "emd_grid=" << emd_grid << "\n"
     << "emd_p=" << fmt(emd_p) << "\n"
     << "emd_variant=" << (emd_variant == EmdVariant::DimensionExponent ? "dimension" : "literal") << "\n"
     << "input=" << input << "\n";
}

void ExperimentConfig::write(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  write(f);
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace pcdm
