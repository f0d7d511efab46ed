#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcdm/commands.hpp"
#include "pcdm/config.hpp"
#include "pcdm/dataset.hpp"
#include "pcdm/error.hpp"
#include "pcdm/io.hpp"

using namespace pcdm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pcdm_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  std::istringstream is(
      "hierarchy = haar\nlevels=2\nheight=4\nwidth=4\nT=20\nsteps=30\nbatch=4\nwidths=4\n"
      "dataset_count=24\neval_count=6\nlog_every=10\nmc_samples=0\nT_codec=8\nood_n=2\nood_count=6\nsamples=2\n");
  ExperimentConfig c = parse_config(is);
  c.out = out.string();
  return c;
}

}  // namespace

TEST(Config, ParsesAndRejectsUnknownKeys) {
  std::istringstream ok("# comment\nlevels = 3 # trailing\nwidths=8, 16\nhierarchy=lp\ngamma_min=-10\naux_seed=0x10\ndecoder_var=0.01\n");
  const ExperimentConfig c = parse_config(ok);
  EXPECT_EQ(c.levels, 3u);
  EXPECT_EQ(c.widths, (std::vector<std::size_t>{8, 16}));
  EXPECT_EQ(c.hierarchy, HierarchyKind::LaplacianPyramid);
  EXPECT_DOUBLE_EQ(c.gamma_min, -10.0);
  EXPECT_EQ(c.aux_seed, 16u);
  ASSERT_TRUE(c.decoder_var.has_value());

  std::istringstream bad("levels=2\nlearning_rate=0.1\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  std::istringstream noeq("levels 2\n");
  EXPECT_THROW(parse_config(noeq), ConfigError);
  std::istringstream nan("lr=abc\n");
  EXPECT_THROW(parse_config(nan), ConfigError);
  std::istringstream neg("steps=-3\n");
  EXPECT_THROW(parse_config(neg), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/pcdm.cfg"), IoError);
}

TEST(Config, ResolvedTextRoundTrips) {
  ExperimentConfig c;
  c.levels = 3;
  c.lr = 1e-3 / 3.0;
  c.decoder_var = 0.125;
  c.widths = {5, 7};
  std::ostringstream os;
  c.write(os);
  std::istringstream is(os.str());
  const ExperimentConfig back = parse_config(is);
  std::ostringstream again;
  back.write(again);
  EXPECT_EQ(os.str(), again.str());
  EXPECT_EQ(back.lr, c.lr);
}

TEST(Config, ValidateCatchesIndivisibleShapes) {
  ExperimentConfig c;
  c.height = 6;
  c.levels = 3;
  EXPECT_THROW(c.validate(), ShapeError);
  c = ExperimentConfig{};
  c.emd_grid = 6;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Dataset, GeneratorsAreDeterministicAndShaped) {
  for (auto kind : {DatasetKind::GaussianMixture, DatasetKind::Checkerboard}) {
    ToyDatasetSpec spec;
    spec.kind = kind;
    spec.height = 8;
    spec.width = 4;
    spec.channels = 3;
    spec.count = 10;
    const auto a = make_dataset(spec), b = make_dataset(spec);
    ASSERT_EQ(a.size(), 10u);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a[0].height, 8u);
    EXPECT_EQ(a[0].width, 4u);
    EXPECT_EQ(a[0].channels, 3u);
    spec.seed = 2;
    EXPECT_NE(make_dataset(spec), a);
  }
  Rng rng(1);
  for (const auto& img : constant_images(4, 4, 3, 5, rng))
    for (auto p : img.pixels) EXPECT_EQ(p, img.pixels[0]);
}

TEST(Dataset, DirectoryLoadsSortedImages) {
  const fs::path dir = scratch("dir");
  fs::create_directories(dir);
  Rng rng(4);
  const auto imgs = uniform_noise_images(4, 4, 1, 3, rng);
  for (std::size_t i = 0; i < 3; ++i) write_image((dir / ("img" + std::to_string(2 - i) + ".pgm")).string(), imgs[i]);
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto back = directory_images(dir.string());
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0], imgs[2]);
  EXPECT_EQ(back[2], imgs[0]);
  write_image((dir / "odd.pgm").string(), ImageU8(2, 2, 1));
  EXPECT_THROW(directory_images(dir.string()), ShapeError);
  EXPECT_THROW(directory_images((dir / "missing").string()), IoError);
  fs::remove_all(dir);
}

TEST(Commands, CheckPassesOnDefaults) {
  const fs::path out = scratch("check");
  ExperimentConfig c;
  c.out = out.string();
  std::ostringstream log;
  EXPECT_EQ(cmd_check(c, log), 0) << log.str();
  EXPECT_TRUE(fs::exists(out / "check.csv"));
  EXPECT_TRUE(fs::exists(out / "check.resolved.cfg"));
  fs::remove_all(out);
}

TEST(Commands, PipelineIsDeterministicAndLossless) {
  const fs::path a = scratch("a"), b = scratch("b");
  for (const fs::path& out : {a, b}) {
    const ExperimentConfig c = tiny(out);
    std::ostringstream log;
    for (const char* cmd : {"train", "eval", "sample", "compress", "decompress", "ood", "emd-bench"}) {
      ExperimentConfig cc = c;
      if (std::string(cmd) == "emd-bench") cc.emd_pairs = 5;
      ASSERT_EQ(run_command(cmd, cc, log), 0) << cmd;
    }
  }
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (name.ends_with(".resolved.cfg")) continue;  // records the output path
    EXPECT_EQ(slurp(e.path().string()), slurp((b / name).string())) << name;
  }
  for (std::size_t i = 0; i < 6; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.pgm", i);
    EXPECT_EQ(slurp((a / ("original_" + std::string(buf))).string()), slurp((a / ("decoded_" + std::string(buf))).string()));
  }
  const std::string header = slurp((a / "emd.csv").string()).substr(0, 30);
  EXPECT_EQ(header.substr(0, header.find('\n')), "pair_id,exact,surrogate,ratio");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Commands, ErrorsAreTyped) {
  const fs::path out = scratch("err");
  ExperimentConfig c = tiny(out);
  std::ostringstream log;
  c.model = (out / "absent.pcdm").string();
  EXPECT_THROW(cmd_eval(c, log), IoError);
  EXPECT_THROW(run_command("frobnicate", c, log), ConfigError);
  c.input.clear();
  EXPECT_THROW(cmd_plot_data(c, log), ConfigError);
  fs::remove_all(out);
}
