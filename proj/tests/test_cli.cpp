#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nhps;
namespace fs = std::filesystem;

namespace {

/// Scratch directory per test; commands run with it as the working directory.
class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               (std::string("nhps_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" NHPS_CLI_PATH "' " + args + " >out.txt 2>err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string read(const std::string& name) const {
        std::ifstream in(path(name));
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    std::vector<std::string> lines(const std::string& name) const {
        std::vector<std::string> out;
        std::istringstream in(read(name));
        for (std::string l; std::getline(in, l);)
            if (!l.empty()) out.push_back(l);
        return out;
    }
    void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

    /// Small synthetic corpus: K = 2, D = 4, 12/4/6 sequences.
    void generate() const {
        ASSERT_EQ(run("gen-synthetic --out-dir gen --num-types 2 --hidden 4 --train-size 12 --dev-size 4 "
                      "--test-size 6 --min-length 4 --max-length 8 --seed 1"),
                  0)
            << read("err.txt");
    }

    fs::path dir_;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("impute --help"), 0);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("no-such-command"), 2);
    EXPECT_EQ(run("otd --pred a --ref b --bogus-flag"), 2);
}

TEST_F(Cli, SeedIsRequiredForStochasticCommands) {
    EXPECT_EQ(run("gen-synthetic --out-dir g"), 2);
    EXPECT_NE(read("err.txt").find("--seed"), std::string::npos);
    EXPECT_EQ(run("censor --data d --out o --rho-all 0.5"), 2);
}

TEST_F(Cli, GenerateIsDeterministic) {
    for (const char* out : {"a", "b"})
        ASSERT_EQ(run(std::string("gen-synthetic --out-dir ") + out +
                      " --num-types 3 --hidden 4 --train-size 5 --dev-size 2 --test-size 2 --seed 9"),
                  0);
    for (const char* f : {"truth.json", "train.ndjson", "dev.ndjson", "test.ndjson"})
        EXPECT_EQ(read(std::string("a/model_0/") + f), read(std::string("b/model_0/") + f)) << f;
    EXPECT_EQ(lines("a/model_0/train.ndjson").size(), 5u);
    const auto d = read_dataset(path("a/model_0/train.ndjson"));
    EXPECT_EQ(d.num_types, 3);
    for (const auto& s : d.sequences) {
        EXPECT_TRUE(s.fully_observed());
        EXPECT_GE(s.num_interior(), 10u);  // lengths 11..20 by default, the last closes the window
        EXPECT_LE(s.num_interior(), 19u);
    }
}

TEST_F(Cli, ConfigFileOverridesAndPrecedence) {
    write("cfg.json", R"({"train_size": 3, "gen-synthetic": {"dev-size": 2}, "test-size": 4})");
    ASSERT_EQ(run("gen-synthetic --config cfg.json --out-dir g --num-types 2 --hidden 2 --test-size 1 --seed 3"), 0)
        << read("err.txt");
    EXPECT_EQ(lines("g/model_0/train.ndjson").size(), 3u);
    EXPECT_EQ(lines("g/model_0/dev.ndjson").size(), 2u);
    EXPECT_EQ(lines("g/model_0/test.ndjson").size(), 1u);  // command line wins
    write("bad.json", R"({"no-such-option": 1})");
    EXPECT_EQ(run("gen-synthetic --config bad.json --out-dir g --seed 3"), 2);
    write("broken.json", "{");
    EXPECT_EQ(run("gen-synthetic --config broken.json --out-dir g --seed 3"), 2);
}

TEST_F(Cli, CensorValidation) {
    generate();
    EXPECT_EQ(run("censor --data gen/model_0/test.ndjson --out c.ndjson --rho-all 1.5 --seed 2"), 2);
    EXPECT_EQ(run("censor --data gen/model_0/test.ndjson --out c.ndjson --seed 2"), 2);
    EXPECT_EQ(run("censor --data gen/model_0/test.ndjson --out c.ndjson --rho 0.5 --seed 2"), 2);  // needs K entries
    EXPECT_EQ(run("censor --data gen/model_0/test.ndjson --out c.ndjson --rho-all 0.5 --missing-types 1 --seed 2"), 2);
    ASSERT_EQ(run("censor --data gen/model_0/test.ndjson --out c.ndjson --rho 0.2 0.8 --seed 2"), 0);
    const auto c = read_dataset(path("c.ndjson"));
    const auto full = read_dataset(path("gen/model_0/test.ndjson"));
    ASSERT_EQ(c.size(), full.size());
    for (std::size_t n = 0; n < c.size(); ++n) EXPECT_EQ(c.sequences[n].num_interior(), full.sequences[n].num_interior());
    EXPECT_EQ(run("censor --data c.ndjson --out c2.ndjson --rho-all 0.5 --seed 2"), 2);  // input must be complete
}

TEST_F(Cli, InvalidSequencesExitTwo) {
    write("bad.ndjson", R"({"T": 2, "K": 2, "events": [{"k": 1, "t": 1.5}, {"k": 2, "t": 0.5}]})" "\n");
    EXPECT_EQ(run("censor --data bad.ndjson --out o.ndjson --rho-all 0.5 --seed 1"), 2);
    EXPECT_NE(read("err.txt").find("non-monotone"), std::string::npos);
}

TEST_F(Cli, FullPipeline) {
    generate();
    const std::string g = "gen/model_0/";
    ASSERT_EQ(run("censor --data " + g + "test.ndjson --out test_c.ndjson --rho-all 0.5 --seed 2"), 0);
    ASSERT_EQ(run("train-model --train " + g + "train.ndjson --dev " + g +
                  "dev.ndjson --out model.json --log model.csv --hidden 4 --max-epochs 2 --seed 3"),
              0)
        << read("err.txt");
    EXPECT_EQ(load_model(path("model.json")).hidden(), 4);
    const auto tlog = lines("model.csv");
    EXPECT_EQ(tlog.front(), "epoch,train_objective,dev_objective,best");
    EXPECT_GE(tlog.size(), 2u);
    ASSERT_EQ(run("train-proposal --model model.json --train " + g + "train.ndjson --dev " + g +
                  "dev.ndjson --out prop.json --hidden-reverse 2 --max-epochs 1 --rho-all 0.5 --seed 4"),
              0)
        << read("err.txt");

    const std::string imp = "impute --model model.json --proposal prop.json --data test_c.ndjson --rho-all 0.5 "
                            "--particles 6 --seed 5 ";
    ASSERT_EQ(run(imp + "--out e1.ndjson --threads 1"), 0) << read("err.txt");
    ASSERT_EQ(run(imp + "--out e2.ndjson --threads 3"), 0);
    EXPECT_EQ(read("e1.ndjson"), read("e2.ndjson"));
    const auto ens = read_ensembles(path("e1.ndjson"));
    ASSERT_EQ(ens.size(), 6u);
    for (std::size_t n = 0; n < ens.size(); ++n) {
        EXPECT_EQ(ens[n].id, n);
        EXPECT_EQ(ens[n].particles.size(), 6u);
        EXPECT_TRUE(ens[n].smooth);
    }

    ASSERT_EQ(run("decode --ensembles e1.ndjson --out dec.ndjson --cost 0.5 --cost 2"), 0) << read("err.txt");
    EXPECT_EQ(lines("dec.ndjson").size(), 12u);
    ASSERT_EQ(run("evaluate-decode --decodes dec.ndjson --refs test_c.ndjson --out eval.csv"), 0) << read("err.txt");
    const auto ev = lines("eval.csv");
    ASSERT_EQ(ev.size(), 3u);
    EXPECT_EQ(ev[0], "C,insertions_deletions,movement,total");
    EXPECT_EQ(split_csv(ev[1])[0], "0.5");
    EXPECT_EQ(split_csv(ev[2])[0], "2");

    ASSERT_EQ(run("evaluate-proposal --model model.json --proposal prop.json --data test_c.ndjson --rho-all 0.5 "
                  "--out ep.csv --seed 6"),
              0);
    const auto epl = lines("ep.csv");
    EXPECT_EQ(epl[0], "id,num_missing,filter,smooth");
    for (std::size_t i = 1; i < epl.size(); ++i) {
        const auto cells = split_csv(epl[i]);
        ASSERT_EQ(cells.size(), 4u);
        EXPECT_FALSE(cells[3].empty());
    }
}

TEST_F(Cli, OtdSubcommand) {
    write("p.ndjson", R"({"T": 6, "K": 1, "events": [{"k": 1, "t": 1.0, "obs": false}, {"k": 1, "t": 2.0, "obs": false}]})" "\n");
    write("r.ndjson",
          R"({"T": 6, "K": 1, "events": [{"k": 1, "t": 1.5, "obs": false}, {"k": 1, "t": 5.0, "obs": true}]})" "\n");
    ASSERT_EQ(run("otd --pred p.ndjson --ref r.ndjson --cost 1"), 0) << read("err.txt");
    auto out = lines("out.txt");
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], "id,distance,unaligned,movement");
    EXPECT_EQ(out[1], "0,2.5,2,0.5");  // 5.0 is too far to align with 2.0
    ASSERT_EQ(run("otd --pred p.ndjson --ref r.ndjson --cost 1 --missing-only --out o.csv"), 0);
    EXPECT_EQ(lines("o.csv")[1], "0,1.5,1,0.5");
    write("two.ndjson", read("r.ndjson") + read("r.ndjson"));
    EXPECT_EQ(run("otd --pred p.ndjson --ref two.ndjson"), 2);
    EXPECT_EQ(run("otd --pred p.ndjson --ref r.ndjson --cost 0"), 2);
}

TEST_F(Cli, EvaluateDecodeExtremes) {
    write("refs.ndjson",
          R"({"T": 5, "K": 2, "events": [{"k": 1, "t": 1.0, "obs": false}, {"k": 2, "t": 2.0}, {"k": 2, "t": 3.0, "obs": false}]})"
          "\n"
          R"({"T": 5, "K": 2, "events": [{"k": 1, "t": 4.0, "obs": false}]})"
          "\n");
    write("perfect.ndjson", R"({"id": 0, "C": 1, "events": [{"k": 1, "t": 1.0}, {"k": 2, "t": 3.0}]})" "\n"
                            R"({"id": 1, "C": 1, "events": [{"k": 1, "t": 4.0}]})" "\n");
    ASSERT_EQ(run("evaluate-decode --decodes perfect.ndjson --refs refs.ndjson --out a.csv"), 0) << read("err.txt");
    EXPECT_EQ(lines("a.csv")[1], "1,0,0,0");
    write("empty.ndjson", R"({"id": 0, "C": 1, "events": []})" "\n" R"({"id": 1, "C": 1, "events": []})" "\n");
    ASSERT_EQ(run("evaluate-decode --decodes empty.ndjson --refs refs.ndjson --out b.csv"), 0);
    EXPECT_EQ(lines("b.csv")[1], "1,1,0,1");
    write("partial.ndjson", R"({"id": 0, "C": 1, "events": []})" "\n");
    EXPECT_EQ(run("evaluate-decode --decodes partial.ndjson --refs refs.ndjson --out c.csv"), 2);
    write("dup.ndjson", read("empty.ndjson") + R"({"id": 1, "C": 1, "events": []})" "\n");
    EXPECT_EQ(run("evaluate-decode --decodes dup.ndjson --refs refs.ndjson --out c.csv"), 2);
}

TEST_F(Cli, EvaluateProposalPoissonClosedForm) {
    // Constant-intensity model and a proposal with B = 0: both columns equal the
    // thinned Poisson density of z* per missing event.
    auto model = NHPParams::zeros(2, 3);
    model.s << 0.5, 2.0;
    save_checkpoint(path("m.json"), model);
    Rng rng(7);
    auto phi = nhps::testing::random_proposal(2, 3, 2, rng);
    phi.B.setZero();
    save_checkpoint(path("q.json"), phi);
    write("d.ndjson",
          R"({"T": 4, "K": 2, "events": [{"k": 1, "t": 0.5, "obs": false}, {"k": 2, "t": 1.0}, {"k": 2, "t": 3.0, "obs": false}]})"
          "\n"
          R"({"T": 4, "K": 2, "events": [{"k": 1, "t": 2.0}]})"
          "\n");
    ASSERT_EQ(run("evaluate-proposal --model m.json --proposal q.json --data d.ndjson --rho-all 0.25 --out e.csv --seed 1"),
              0)
        << read("err.txt");
    const auto l = lines("e.csv");
    ASSERT_EQ(l.size(), 2u);  // the second sequence has nothing missing
    EXPECT_NE(read("err.txt").find("skipped 1"), std::string::npos);
    const auto cells = split_csv(l[1]);
    const double r1 = 0.25 * 0.5 * std::log(2.0), r2 = 0.25 * 2.0 * std::log(2.0);
    const double expect = (std::log(r1) + std::log(r2) - (r1 + r2) * 4.0) / 2.0;
    EXPECT_EQ(cells[1], "2");
    EXPECT_NEAR(std::stod(cells[2]), expect, 1e-12);
    EXPECT_EQ(cells[2], cells[3]);
    ASSERT_EQ(run("evaluate-proposal --model m.json --data d.ndjson --rho-all 0.25 --out f.csv --seed 1"), 0);
    EXPECT_TRUE(split_csv(lines("f.csv")[1])[3].empty());
}

TEST_F(Cli, SweepRhoAndMcemSmoke) {
    generate();
    const std::string g = "gen/model_0/";
    ASSERT_EQ(run("sweep-rho --model " + g + "truth.json --data " + g +
                  "test.ndjson --out sw.csv --rho-values 0.3 0.7 --cost 1 --particles 4 --seed 2"),
              0)
        << read("err.txt");
    const auto sw = lines("sw.csv");
    ASSERT_EQ(sw.size(), 3u);
    EXPECT_EQ(sw[0], "rho,method,C,insertions_deletions,movement,total");
    EXPECT_EQ(split_csv(sw[1])[1], "filter");

    ASSERT_EQ(run("censor --data " + g + "train.ndjson --out tr_c.ndjson --rho-all 0.3 --seed 3"), 0);
    ASSERT_EQ(run("mcem --train tr_c.ndjson --out em.json --log em.csv --rounds 2 --particles 3 --hidden 4 "
                  "--max-epochs 1 --rho-all 0.3 --seed 4"),
              0)
        << read("err.txt");
    const auto em = lines("em.csv");
    ASSERT_EQ(em.size(), 3u);
    EXPECT_EQ(em[0], "round,objective_before,objective_after,mean_ess,mstep_epochs");
    EXPECT_EQ(load_model(path("em.json")).hidden(), 4);
}
