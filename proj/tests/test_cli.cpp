// Copyright 2026 The dgmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// End-to-end tests that drive the built executable.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dgmil/dgmil.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dgmil_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the CLI inside the scratch directory and returns its exit code.
  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" + DGMIL_CLI_PATH + "' " + args + " >stdout.txt 2>stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  /// Small separable data: train.dgmf and test.dgmf under data/.
  void generate_small() {
    ASSERT_EQ(run("--quiet generate --out-dir data --dim 6 --phenotypes 3 --neg-bags 8 --pos-bags 8 --bag-size 40"), 0);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }

  fs::path dir_;
};

TEST_F(Cli, DefaultGenerateProducesValidFiles) {
  ASSERT_EQ(run("--quiet generate --out-dir data"), 0);
  for (const char* name : {"train.dgmf", "test.dgmf"}) {
    const auto ds = dgmil::read_feature_file(path("data") / name);
    EXPECT_TRUE(dgmil::validate_dataset(ds.instances, ds.bags).empty());
    EXPECT_GT(ds.bags.count_with_label(1), 0u);
    EXPECT_GT(ds.bags.count_with_label(0), 0u);
  }
  const auto manifest = json::parse(slurp(path("data/manifest.json")));
  EXPECT_EQ(manifest.at("files").at("train.dgmf").at("sha256").get<std::string>().size(), 64u);
}

TEST_F(Cli, SameSeedSameChecksums) {
  ASSERT_EQ(run("--seed 5 --quiet generate --out-dir a --dim 4 --neg-bags 4 --pos-bags 4 --bag-size 10"), 0);
  ASSERT_EQ(run("--seed 5 --quiet generate --out-dir b --dim 4 --neg-bags 4 --pos-bags 4 --bag-size 10"), 0);
  ASSERT_EQ(run("--seed 6 --quiet generate --out-dir c --dim 4 --neg-bags 4 --pos-bags 4 --bag-size 10"), 0);
  const auto a = json::parse(slurp(path("a/manifest.json"))).at("files");
  const auto b = json::parse(slurp(path("b/manifest.json"))).at("files");
  const auto c = json::parse(slurp(path("c/manifest.json"))).at("files");
  EXPECT_EQ(a, b);
  EXPECT_NE(a.at("train.dgmf").at("sha256"), c.at("train.dgmf").at("sha256"));
  EXPECT_EQ(slurp(path("a/train.dgmf")), slurp(path("b/train.dgmf")));
}

TEST_F(Cli, ZeroWitnessRateRejected) {
  EXPECT_EQ(run("generate --out-dir data --witness-rate 0"), 1);
  EXPECT_NE(err().find("witness"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("data/train.dgmf")));
}

TEST_F(Cli, ZeroRoundsBundleIsIdentity) {
  generate_small();
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 0"), 0);
  const auto bundle = json::parse(slurp(path("model.json")));
  EXPECT_TRUE(bundle.at("heads").empty());
  const dgmil::Matrix w = dgmil::detail::matrix_from_json(bundle.at("collapsed_projection").at("projection"));
  EXPECT_TRUE(w.isIdentity(0.0));
  EXPECT_TRUE(lines_of(path("rounds.jsonl")).empty());
}

TEST_F(Cli, OneRoundWritesOneLogLineAndIsReproducible) {
  generate_small();
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 1 --out m1.json"), 0);
  const auto log = lines_of(path("rounds.jsonl"));
  ASSERT_EQ(log.size(), 1u);
  const auto record = json::parse(log[0]);
  EXPECT_EQ(record.at("round"), 1);
  EXPECT_EQ(record.at("version"), dgmil::kVersion);
  EXPECT_EQ(record.at("config").at("clusters"), 3);
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 1 --out m2.json"), 0);
  EXPECT_EQ(slurp(path("m1.json")), slurp(path("m2.json")));
}

TEST_F(Cli, EvalOnTrainingMatchesLastLogEntry) {
  generate_small();
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 2"), 0);
  ASSERT_EQ(run("--quiet eval --model model.json --data data/train.dgmf --report r.jsonl --curves c.csv"), 0);
  const auto last = json::parse(lines_of(path("rounds.jsonl")).back());
  const auto report = json::parse(lines_of(path("r.jsonl")).front());
  EXPECT_EQ(report.at("metrics").at("instance_auc"), last.at("train_instance_auc"));
  EXPECT_EQ(report.at("metrics").at("bag_auc"), last.at("train_bag_auc"));
  EXPECT_EQ(report.at("bags").size(), 16u);
  EXPECT_EQ(report.at("froc_operating_points").size(), dgmil::kFrocOperatingPoints.size());
  const auto curves = lines_of(path("c.csv"));
  ASSERT_FALSE(curves.empty());
  EXPECT_EQ(curves.front(), "curve,x,y");
}

TEST_F(Cli, UnknownLabelsGiveBagMetricsOnly) {
  generate_small();
  auto ds = dgmil::read_feature_file(path("data/test.dgmf"));
  std::fill(ds.instances.labels.begin(), ds.instances.labels.end(), dgmil::InstanceLabel::kUnknown);
  dgmil::write_feature_file(ds.instances, ds.bags, path("unlabelled.dgmf"));
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 1"), 0);
  ASSERT_EQ(run("--quiet eval --model model.json --data unlabelled.dgmf"), 0);
  EXPECT_NE(err().find("warning"), std::string::npos);
  const auto metrics = json::parse(lines_of(path("report.jsonl")).front()).at("metrics");
  EXPECT_TRUE(metrics.at("instance_auc").is_null());
  EXPECT_TRUE(metrics.at("froc_score").is_null());
  EXPECT_TRUE(metrics.at("bag_auc").is_number());
}

TEST_F(Cli, DimensionMismatchWritesNoReport) {
  generate_small();
  ASSERT_EQ(run("--quiet generate --out-dir other --dim 5 --neg-bags 4 --pos-bags 4 --bag-size 10"), 0);
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 1"), 0);
  EXPECT_NE(run("eval --model model.json --data other/test.dgmf --report r.jsonl"), 0);
  EXPECT_FALSE(fs::exists(path("r.jsonl")));
  EXPECT_NE(err().find("dimension"), std::string::npos);
}

TEST_F(Cli, AblateRowsFollowGridOrder) {
  generate_small();
  ASSERT_EQ(run("--quiet ablate --axis clusters --values 5,1,3 --train data/train.dgmf --test data/test.dgmf "
                "--max-rounds 1"),
            0);
  const auto rows = lines_of(path("ablation.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].substr(0, 9), "clusters,");
  EXPECT_EQ(rows[1].substr(0, 2), "5,");
  EXPECT_EQ(rows[2].substr(0, 2), "1,");
  EXPECT_EQ(rows[3].substr(0, 2), "3,");
  const auto table = json::parse(slurp(path("ablation.json")));
  EXPECT_EQ(table.at("version"), dgmil::kVersion);
  ASSERT_EQ(table.at("rows").size(), 3u);
  EXPECT_EQ(table.at("rows")[1].at("clusters"), 1);
  EXPECT_TRUE(table.at("rows")[1].at("error").is_null());
}

TEST_F(Cli, AblateFailingCellDoesNotStopSweep) {
  generate_small();
  // 5000 clusters exceeds the 640 training instances.
  ASSERT_EQ(run("--quiet ablate --axis clusters --values 5000,2 --train data/train.dgmf --test data/test.dgmf "
                "--max-rounds 1"),
            0);
  const auto rows = json::parse(slurp(path("ablation.json"))).at("rows");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].at("error").is_string());
  EXPECT_TRUE(rows[1].at("error").is_null());
  EXPECT_TRUE(rows[1].at("instance_auc").is_number());
}

TEST_F(Cli, EmptyGridIsValidationError) {
  generate_small();
  EXPECT_EQ(run("ablate --values '' --train data/train.dgmf --test data/test.dgmf"), 1);
  EXPECT_FALSE(fs::exists(path("ablation.csv")));
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  generate_small();
  std::ofstream(path("run.cfg")) << "# shared settings\nclusters = 2\nmax-rounds = 1\n";
  ASSERT_EQ(run("--config run.cfg --quiet train --train data/train.dgmf --clusters 4"), 0);
  auto config = json::parse(slurp(path("model.json"))).at("config");
  EXPECT_EQ(config.at("clusters"), 4);
  EXPECT_EQ(config.at("max-rounds"), 1);
  ASSERT_EQ(run("--config run.cfg --quiet train --train data/train.dgmf"), 0);
  config = json::parse(slurp(path("model.json"))).at("config");
  EXPECT_EQ(config.at("clusters"), 2);
}

TEST_F(Cli, UnknownConfigKeyRejected) {
  generate_small();
  std::ofstream(path("bad.cfg")) << "clusterz = 2\n";
  EXPECT_EQ(run("--config bad.cfg train --train data/train.dgmf"), 1);
  EXPECT_NE(err().find("clusterz"), std::string::npos);
}

TEST_F(Cli, InspectSummarizesFiles) {
  generate_small();
  ASSERT_EQ(run("inspect data/train.dgmf"), 0);
  auto out = json::parse(slurp(path("stdout.txt")));
  EXPECT_EQ(out.at("kind"), "dataset");
  EXPECT_EQ(out.at("bags"), 16);
  EXPECT_EQ(out.at("violations"), 0);
  ASSERT_EQ(run("--quiet train --train data/train.dgmf --clusters 3 --max-rounds 1"), 0);
  ASSERT_EQ(run("inspect model.json"), 0);
  out = json::parse(slurp(path("stdout.txt")));
  EXPECT_EQ(out.at("kind"), "model");
  EXPECT_EQ(out.at("clusters"), 3);
}

TEST_F(Cli, MissingInputIsIoError) {
  EXPECT_EQ(run("train --train missing.dgmf"), 2);
  EXPECT_NE(err().find("missing.dgmf"), std::string::npos);
}

TEST_F(Cli, CorruptInputIsFormatError) {
  std::ofstream(path("junk.dgmf")) << "not a feature file";
  EXPECT_EQ(run("train --train junk.dgmf"), 1);
}

}  // namespace
