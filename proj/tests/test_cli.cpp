#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "dgmeval/ensemble_io.hpp"
#include "support.hpp"

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(DGMEVAL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help, usage errors and io errors map to exit codes") {
    testing::temp_dir d;
    const auto log = d / "log.txt";
    CHECK(run("--help", log) == 0);
    CHECK(run("evaluate --help", log) == 0);
    CHECK(run("", log) == 1);
    CHECK(run("evaluate --bogus", log) == 1);
    CHECK(run("synth -n 3", log) == 1);
    CHECK(run("synth --out " + (d / "x").string() + " -n 2 --mix 1,2", log) == 1);
    CHECK(run("frechet " + (d / "a.bin").string() + " " + (d / "b.bin").string(), log) == 2);
    CHECK(run("memcheck --train " + (d / "none.txt").string() + " --gen " + (d / "none.txt").string(), log) == 2);
  }

  TEST_CASE("synth, features and rank with a config file") {
    testing::temp_dir d;
    const auto log = d / "log.txt";
    REQUIRE(run("synth --out " + (d / "ens").string() + " -n 14 --seed 3", log) == 0);
    const auto m = dgmeval::read_manifest(d / "ens" / "manifest.txt");
    CHECK(m.ids.size() == 14);
    CHECK(m.declared_count == 14u);
    CHECK(m.labels[0].has_value());
    REQUIRE(run("features --manifest " + (d / "ens" / "manifest.txt").string() + " --csv " + (d / "f.csv").string() +
                    " --families texture,fg_ratio",
                log) == 0);
    {
      std::ofstream cfg(d / "rank.cfg");
      cfg << "# quick run\nn_boot = 3\nk=2\nn-pairs=500\n";
    }
    const auto f = (d / "f.csv").string();
    REQUIRE(run("rank --train " + f + " --gen " + f + " --config " + (d / "rank.cfg").string() + " --n-boot 4 --out " +
                    (d / "r.json").string(),
                log) == 0);
    const auto j = nlohmann::json::parse(dgmeval::read_text_file(d / "r.json"));
    CHECK(j["n_boot"] == 4);
    CHECK(j["k"] == 2);
    CHECK(j["n_pairs"] == 500);
    {
      std::ofstream cfg(d / "bad.cfg");
      cfg << "no_such_key=1\n";
    }
    CHECK(run("rank --train " + f + " --gen " + f + " --config " + (d / "bad.cfg").string(), log) == 1);
  }
}
