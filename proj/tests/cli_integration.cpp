// End-to-end exercise of the bbadv binary: synth -> train -> attack ->
// determinism compare -> sweep -> report, plus failure exit codes.
// Usage: cli_integration <path-to-bbadv> <work-dir>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::printf("[ok]   %s\n", what.c_str());
  } else {
    std::printf("[FAIL] %s\n", what.c_str());
    ++failures;
  }
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// drop the time column (index 5) from every csv row
std::string strip_time_column(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i == 5) continue;
      os << cols[i] << ",";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: cli_integration <bbadv> <work-dir>\n");
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path work = argv[2];
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string data = (work / "data").string();
  const std::string model = (work / "model.bin").string();

  check(run(bin + " synth --out-dir " + data +
            " --train-count 600 --test-count 200 --seed 3") == 0,
        "synth generates idx files");
  check(fs::exists(fs::path(data) / "train-images.idx"), "train images exist");
  check(fs::exists(fs::path(data) / "test-labels.idx"), "test labels exist");

  check(run(bin + " train --train-images " + data + "/train-images.idx" +
            " --train-labels " + data + "/train-labels.idx" +
            " --test-images " + data + "/test-images.idx" +
            " --test-labels " + data + "/test-labels.idx" +
            " --arch linear --epochs 6 --lr 0.5 --batch 32 --seed 1 --out " +
            model) == 0,
        "train completes");
  check(fs::exists(model), "model file written");
  check(fs::exists(model + ".norm"), "norm stats written");
  check(fs::exists(model + ".txt"), "model description written");

  const std::string attack_base =
      " attack --model " + model + " --images " + data + "/test-images.idx" +
      " --labels " + data + "/test-labels.idx" +
      " --n 3 --seed 5 --save-pairs 2 --workers 2";
  const std::string attack_args =
      attack_base + " --technique locsearch --rounds 25";
  check(run(bin + attack_args + " --out-dir " + (work / "run1").string()) == 0,
        "attack run 1 completes");
  check(run(bin + attack_args + " --out-dir " + (work / "run2").string()) == 0,
        "attack run 2 completes");

  const std::string csv1 = slurp(work / "run1" / "metrics.csv");
  const std::string csv2 = slurp(work / "run2" / "metrics.csv");
  check(!csv1.empty(), "metrics.csv non-empty");
  check(csv1.rfind("ErrTop-1,ErrTop-1(Adv),conf,ptb,ptbpixels,time", 0) == 0,
        "metrics.csv header layout");
  check(strip_time_column(csv1) == strip_time_column(csv2),
        "identical seeds give identical csv (time column aside)");
  check(slurp(work / "run1" / "transcript.jsonl") ==
            slurp(work / "run2" / "transcript.jsonl"),
        "identical seeds give identical transcripts");
  check(slurp(work / "run1" / "manifest.txt") ==
            slurp(work / "run2" / "manifest.txt"),
        "identical seeds give identical manifests");

  // transcript lines parse as json
  {
    std::ifstream tr(work / "run1" / "transcript.jsonl");
    std::string line;
    bool all_ok = true;
    int lines = 0;
    while (std::getline(tr, line)) {
      ++lines;
      try {
        auto j = nlohmann::json::parse(line);
        (void)j;
      } catch (...) {
        all_ok = false;
      }
    }
    check(all_ok && lines > 0, "transcript lines are json records");
  }

  check(run(bin + " attack --model " + (work / "missing.bin").string() +
            " --images " + data + "/test-images.idx --labels " + data +
            "/test-labels.idx --out-dir " + (work / "bad").string()) != 0,
        "missing model fails with nonzero exit");

  check(run(bin + " report --csv " + (work / "run1" / "metrics.csv").string()) ==
            0,
        "report prints a csv");

  check(run(bin + " sweep --param p --values 1,100 --model " + model +
            " --images " + data + "/test-images.idx --labels " + data +
            "/test-labels.idx --n 2 --budget 40 --seed 9 --out-dir " +
            (work / "sweep").string()) == 0,
        "randadv p sweep completes");
  check(fs::exists(work / "sweep" / "sweep.csv"), "sweep.csv written");

  check(run(bin + attack_base + " --out-dir " + (work / "fgsm").string() +
            " --technique fgsm --eps 0.3") == 0,
        "fgsm run completes");
  check(run(bin + attack_base + " --out-dir " + (work / "ra").string() +
            " --technique randadv --budget 60") == 0,
        "randadv run completes");

  if (failures == 0) {
    std::printf("cli integration: all checks passed\n");
    return 0;
  }
  std::printf("cli integration: %d check(s) failed\n", failures);
  return 1;
}
