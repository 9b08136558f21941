#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "dfds/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("dfds_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(DFDS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("generate is deterministic and covers the requested span") {
  Scratch s;
  REQUIRE(run("generate --out " + s / "a.csv" + " --seed 4 --stations 3 --weeks 2") == 0);
  REQUIRE(run("generate --out " + s / "b.csv" + " --seed 4 --stations 3 --weeks 2") == 0);
  REQUIRE(run("generate --out " + s / "c.csv" + " --seed 5 --stations 3 --weeks 2") == 0);
  const std::string a = slurp(s / "a.csv");
  CHECK(a == slurp(s / "b.csv"));
  CHECK(a != slurp(s / "c.csv"));
  CHECK(line_count(a) == 1 + 3 * 2 * 672);
}

TEST_CASE("exit codes separate usage, data and numerical failures") {
  Scratch s;
  CHECK(run("") == 1);
  CHECK(run("train --no-such-flag 1") == 1);
  CHECK(run("generate") == 1);
  CHECK(run("train --data " + s / "missing.csv" + " --out " + s / "m.ckpt") == 2);
  CHECK(run("train --data x.csv --out y --input-hours 1.1") == 1);
  CHECK(run("train --data x.csv --out y --model nosuch") != 0);
  CHECK(run("gradcheck --seed 2") == 0);
  CHECK(run("gradcheck --seed 2 --inject-fault logreg") == 3);

  std::ofstream(s / "bad.csv") << "station_id,timestamp,occupied\ns1,1596412800,7\n";
  CHECK(run("train --data " + s / "bad.csv" + " --out " + s / "m.ckpt") == 2);
}

TEST_CASE("train, evaluate and the effective config") {
  Scratch s;
  REQUIRE(run("generate --out " + s / "d.csv" + " --seed 3 --stations 3 --weeks 4") == 0);
  std::ofstream(s / "run.cfg") << "# small run\ninput_hours = 2\noutput_hours = 1\nhidden = 6\n"
                                  "epochs = 2\ntest_weeks = 1\ntrain_stride = 17\neval_stride = 9\n";
  const std::string common = " --config " + s / "run.cfg" + " --data " + s / "d.csv";

  REQUIRE(run("train" + common + " --model havg --out " + s / "h.ckpt") == 0);
  CHECK(fs::exists(s / "h.ckpt"));
  CHECK(!fs::exists(s / "h.ckpt.log.csv"));

  REQUIRE(run("train" + common + " --model seq2seq --seed 8 --out " + s / "q.ckpt") == 0);
  CHECK(line_count(slurp(s / "q.ckpt.log.csv")) == 3);

  dfds::experiment::RunConfig cfg;
  dfds::experiment::apply_kv(cfg, dfds::experiment::read_kv_file(s / "q.ckpt.config"));
  CHECK(cfg.model == "seq2seq");
  CHECK(cfg.seed == 8);
  CHECK(cfg.hidden == 6);
  CHECK(cfg.input_len() == 8);

  REQUIRE(run("evaluate --data " + s / "d.csv" + " --checkpoint " + s / "q.ckpt" + " --out " + s / "r1.csv") == 0);
  REQUIRE(run("evaluate --data " + s / "d.csv" + " --checkpoint " + s / "q.ckpt" + " --out " + s / "r2.csv") == 0);
  const std::string report = slurp(s / "r1.csv");
  CHECK(report == slurp(s / "r2.csv"));
  CHECK(report.rfind("test_set,precision,recall,f1,tp,fp,fn,tn\nweek1,", 0) == 0);
  CHECK(report.find("\nmacro,") != std::string::npos);

  CHECK(run("evaluate --data " + s / "d.csv" + " --checkpoint " + s / "q.ckpt" + " --input-hours 3") == 2);
  CHECK(run("evaluate --data " + s / "d.csv") == 1);

  // a second training run with the same seed writes the same checkpoint
  REQUIRE(run("train" + common + " --model seq2seq --seed 8 --out " + s / "q2.ckpt") == 0);
  CHECK(slurp(s / "q.ckpt") == slurp(s / "q2.ckpt"));
}
