#include "pcdm/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pcdm/bits_back.hpp"
#include "pcdm/checks.hpp"
#include "pcdm/dataset.hpp"
#include "pcdm/emd.hpp"
#include "pcdm/error.hpp"
#include "pcdm/io.hpp"
#include "pcdm/ood.hpp"
#include "pcdm/parallel.hpp"

namespace pcdm {

namespace {

// Seeds for the independent random streams of a run.
enum Stream : std::uint64_t { kInit = 1, kTrain = 2, kEval = 3, kSample = 4, kOod = 5, kEmd = 6, kCvdm = 7 };

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("write failed: " + path);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) { return cfg.out + "/" + name; }

// Validates, creates the output directory and records the resolved config.
void begin(const ExperimentConfig& cfg, const std::string& command) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create " + cfg.out + ": " + ec.message());
  cfg.write(out_path(cfg, command + ".resolved.cfg"));
}

std::string image_name(const std::string& stem, std::size_t i, const ImageU8& img) {
  std::ostringstream os;
  os << stem << "_" << std::setw(4) << std::setfill('0') << i << (img.channels == 3 ? ".ppm" : ".pgm");
  return os.str();
}

CascadedModel load_model(const ExperimentConfig& cfg) {
  CascadedModel m = CascadedModel::load(cfg.model_path());
  if (m.spec.input_shape() != cfg.hierarchy_spec().input_shape())
    throw ShapeError("model expects " + shape_string(m.spec.input_shape()) + " images, config has " +
                     shape_string(cfg.hierarchy_spec().input_shape()));
  return m;
}

// Held-out images, or the training set when nothing is held out.
std::vector<ImageU8> eval_images(const DataSplit& split) { return split.held_out.empty() ? split.train : split.held_out; }

std::vector<double> per_image_bpd(const CascadedModel& m, const std::vector<ImageU8>& imgs, EvalMode mode, bool cvdm, Rng& rng) {
  const Rng base(rng.next_u64());
  std::vector<double> out(imgs.size());
  parallel_for(imgs.size(), [&](std::size_t i) {
    Rng r = base.child(i);
    const Tensor x = dequantize(imgs[i], r);
    out[i] = (cvdm ? cvdm_loss(m, x, r, mode) : cascaded_loss(m, x, r, mode)).bpd;
  });
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "train");
  const DataSplit split = load_split(cfg);
  const Rng root(cfg.seed);
  Rng init = root.child(kInit), rng = root.child(kTrain);
  CascadedModel model = CascadedModel::create(cfg.hierarchy_spec(), cfg.diffusion_setup(), cfg.widths, init);
  const std::string csv_path = out_path(cfg, "metrics.csv");
  auto csv = open_out(csv_path);
  const auto rows = train(model, split.train, cfg.train_config(), rng, &csv);
  finish(csv, csv_path);
  model.save(cfg.model_path());
  if (!rows.empty()) log << "train: " << rows.size() << " log rows, final bpd estimate " << rows.back().bpd << "\n";
  log << "model written to " << cfg.model_path() << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "eval");
  const std::vector<ImageU8> imgs = eval_images(load_split(cfg));
  const Rng root(cfg.seed);
  struct Entry {
    std::string label;
    std::vector<double> bpd;
  };
  std::vector<Entry> entries;
  {
    const CascadedModel m = load_model(cfg);
    Rng r = root.child(kEval);
    entries.push_back({m.spec.kind == HierarchyKind::NearestNeighbor ? "cvdm" : to_string(m.spec.kind),
                       per_image_bpd(m, imgs, cfg.eval_mode(), false, r)});
  }
  if (!cfg.cvdm_model.empty()) {
    const CascadedModel c = CascadedModel::load(cfg.cvdm_model);
    Rng r = root.child(kCvdm);
    entries.push_back({"cvdm", per_image_bpd(c, imgs, cfg.eval_mode(), true, r)});
  }
  const std::string path = out_path(cfg, "eval.csv");
  auto csv = open_out(path);
  csv << "image_id,model,bpd\n";
  for (const auto& e : entries)
    for (std::size_t i = 0; i < e.bpd.size(); ++i) csv << i << "," << e.label << "," << num(e.bpd[i]) << "\n";
  finish(csv, path);
  const std::string spath = out_path(cfg, "eval_summary.csv");
  auto sum = open_out(spath);
  sum << "model,images,mean_bpd\n";
  for (const auto& e : entries) {
    sum << e.label << "," << e.bpd.size() << "," << num(mean(e.bpd)) << "\n";
    log << e.label << ": " << mean(e.bpd) << " bpd over " << e.bpd.size() << " images\n";
  }
  finish(sum, spath);
  return 0;
}

int cmd_sample(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "sample");
  const CascadedModel m = load_model(cfg);
  Rng rng = Rng(cfg.seed).child(kSample);
  const auto xs = sample_continuous(NetDenoiser(m), m.setup, m.spec, cfg.samples, rng);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const ImageU8 img = to_image(xs[i]);
    write_image(out_path(cfg, image_name("sample", i, img)), img);
  }
  log << "wrote " << xs.size() << " samples to " << cfg.out << "\n";
  return 0;
}

int cmd_compress(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "compress");
  const CascadedModel m = load_model(cfg);
  std::vector<ImageU8> imgs = eval_images(load_split(cfg));
  if (cfg.compress_count && imgs.size() > cfg.compress_count) imgs.resize(cfg.compress_count);
  BbReport rep;
  const BbArchive a = bb_encode(m, imgs, cfg.codec_options(), &rep);
  write_archive(cfg.archive_path(), a);
  for (std::size_t i = 0; i < imgs.size(); ++i) write_image(out_path(cfg, image_name("original", i, imgs[i])), imgs[i]);

  const std::string path = out_path(cfg, "compress.csv");
  auto csv = open_out(path);
  csv << "image_id,net_bits\n";
  for (std::size_t i = 0; i < rep.per_image_net_bits.size(); ++i) csv << i << "," << num(rep.per_image_net_bits[i]) << "\n";
  finish(csv, path);
  const std::string spath = out_path(cfg, "compress_summary.csv");
  auto sum = open_out(spath);
  sum << "images,pixels,gross_bits,aux_bits,net_bits,net_bpd\n"
      << imgs.size() << "," << rep.pixels << "," << num(rep.gross_bits) << "," << num(rep.aux_bits) << "," << num(rep.net_bits) << ","
      << num(rep.net_bpd()) << "\n";
  finish(sum, spath);
  log << "compressed " << imgs.size() << " images: net " << rep.net_bpd() << " bpd, archive " << cfg.archive_path() << "\n";
  return 0;
}

int cmd_decompress(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "decompress");
  const CascadedModel m = CascadedModel::load(cfg.model_path());
  const BbArchive a = read_archive(cfg.archive_path());
  const auto imgs = bb_decode(m, a);
  for (std::size_t i = 0; i < imgs.size(); ++i) write_image(out_path(cfg, image_name("decoded", i, imgs[i])), imgs[i]);
  log << "decoded " << imgs.size() << " images into " << cfg.out << "\n";
  return 0;
}

int cmd_ood(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "ood");
  const CascadedModel m = load_model(cfg);
  const DataSplit split = load_split(cfg);
  const Rng root = Rng(cfg.seed).child(kOod);
  Rng r_h = root.child(0);
  const OodScorer sc = make_scorer(m, split.train, cfg.ood_n, cfg.ood_m, r_h);

  std::vector<ImageU8> in = eval_images(split);
  if (in.size() > cfg.ood_count) in.resize(cfg.ood_count);
  Rng r_u = root.child(1), r_c = root.child(2);
  const std::size_t n_out = cfg.ood_count ? cfg.ood_count : in.size();
  const auto uni = uniform_noise_images(cfg.height, cfg.width, cfg.channels, n_out, r_u);
  const auto con = constant_images(cfg.height, cfg.width, cfg.channels, n_out, r_c);

  struct Set {
    const char* name;
    std::vector<double> scores;
  };
  std::vector<Set> sets;
  std::uint64_t key = 3;
  for (auto [name, imgs] : {std::pair<const char*, const std::vector<ImageU8>*>{"in", &in}, {"out_uniform", &uni}, {"out_const", &con}}) {
    Rng r = root.child(key++);
    sets.push_back({name, typicality_scores(sc, *imgs, r)});
  }
  const std::string path = out_path(cfg, "ood.csv");
  auto csv = open_out(path);
  csv << "image_id,set,score\n";
  for (const auto& s : sets)
    for (std::size_t i = 0; i < s.scores.size(); ++i) csv << i << "," << s.name << "," << num(s.scores[i]) << "\n";
  finish(csv, path);
  const std::string spath = out_path(cfg, "ood_summary.csv");
  auto sum = open_out(spath);
  sum << "set,auroc\n";
  log << "entropy estimate " << sc.entropy << " nats/image\n";
  for (std::size_t k = 1; k < sets.size(); ++k) {
    const double a = auroc(sets[0].scores, sets[k].scores);
    sum << sets[k].name << "," << num(a) << "\n";
    log << sets[k].name << " AUROC " << a << "\n";
  }
  finish(sum, spath);
  return 0;
}

int cmd_emd_bench(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "emd-bench");
  Rng rng = Rng(cfg.seed).child(kEmd);
  std::vector<PairRecord> records;
  const RatioStats st = bound_suite(cfg.emd_pairs, cfg.emd_grid, cfg.emd_p, rng, cfg.emd_variant, &records);
  const std::string path = out_path(cfg, "emd.csv");
  auto csv = open_out(path);
  csv << "pair_id,exact,surrogate,ratio\n";
  for (const auto& r : records) csv << r.id << "," << num(r.exact) << "," << num(r.surrogate) << "," << num(r.ratio) << "\n";
  finish(csv, path);
  log << "pairs " << st.pairs << ", ratio min " << st.min << " max " << st.max << " mean " << st.mean << ", spread " << st.spread
      << ", sign violations " << st.sign_violations << "\n";
  return 0;
}

int cmd_check(const ExperimentConfig& cfg, std::ostream& log) {
  begin(cfg, "check");
  std::vector<CheckResult> all = volume_checks();
  for (auto& r : roundtrip_checks(cfg.hierarchy_spec().input_shape(), cfg.levels, 100)) all.push_back(r);
  all.push_back(gradient_check(cfg.seed));
  const std::string path = out_path(cfg, "check.csv");
  auto csv = open_out(path);
  csv << "check,value,tolerance,pass\n";
  for (const auto& r : all) {
    csv << r.name << "," << num(r.value) << "," << num(r.tolerance) << "," << (r.pass ? 1 : 0) << "\n";
    log << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.value << ")\n";
  }
  finish(csv, path);
  return all_pass(all) ? 0 : 1;
}

int cmd_plot_data(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.input.empty()) throw ConfigError("plot-data needs input=<csv path>");
  begin(cfg, "plot-data");
  std::ifstream in(cfg.input);
  if (!in) throw IoError("cannot open " + cfg.input);
  const std::string dst = out_path(cfg, std::filesystem::path(cfg.input).stem().string() + ".dat");
  auto out = open_out(dst);
  std::string line;
  bool header = true;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    out << (header ? "# " : "") << line << "\n";
    rows += header ? 0 : 1;
    header = false;
  }
  finish(out, dst);
  log << "wrote " << rows << " rows to " << dst << "\n";
  return 0;
}

int run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log) {
  if (name == "train") return cmd_train(cfg, log);
  if (name == "eval") return cmd_eval(cfg, log);
  if (name == "sample") return cmd_sample(cfg, log);
  if (name == "compress") return cmd_compress(cfg, log);
  if (name == "decompress") return cmd_decompress(cfg, log);
  if (name == "ood") return cmd_ood(cfg, log);
  if (name == "emd-bench") return cmd_emd_bench(cfg, log);
  if (name == "check") return cmd_check(cfg, log);
  if (name == "plot-data") return cmd_plot_data(cfg, log);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace pcdm
