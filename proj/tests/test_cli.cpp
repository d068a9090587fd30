#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempo/cli.hpp"
#include "tempo/io_util.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("tempo");
    for (const auto& a : args) argv.push_back(a.c_str());
    return tempo::cli::run(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "tempo_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("kernel-approx writes one row per sample count with a shrinking bound") {
    const auto dir = fresh_dir("kernel_approx");
    const int code = run_cli({"kernel-approx", "--d-list", "16,64,256", "--seeds", "3",
                              "--grid-step", "0.5", "--seed", "5", "--out-dir", dir.string()});
    CHECK(code == 0);
    const auto lines = read_lines(dir / "kernel_approx.csv");
    REQUIRE(lines.size() == 4); // header + 3 rows
    CHECK(lines[0] == "d,mean_sup_error,max_sup_error,bound_raw,bound_clamped");

    double prev_bound = 1e300;
    for (size_t i = 1; i < lines.size(); ++i) {
        std::istringstream ss(lines[i]);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        REQUIRE(cells.size() == 5);
        CHECK(cells[3] < prev_bound);
        prev_bound = cells[3];
    }

    const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
    CHECK(manifest["subcommand"] == "kernel-approx");
    CHECK(manifest["meta"]["sigma_p2"] == 1.0);
    CHECK(manifest["outputs"].contains("kernel_approx.csv"));
}

TEST_CASE("unknown kernel name is a usage error") {
    const auto dir = fresh_dir("bad_kernel");
    CHECK(run_cli({"kernel-approx", "--kernel", "matern", "--out-dir", dir.string()}) == 2);
    CHECK(run_cli({"no-such-subcommand"}) == 2);
}

TEST_CASE("mercer-check emits residual and decay tables") {
    const auto dir = fresh_dir("mercer_check");
    const int code = run_cli({"mercer-check", "--kernel", "triangle", "--jmax", "4", "--out-dir",
                              dir.string()});
    CHECK(code == 0);
    const auto residuals = read_lines(dir / "eigen_residuals.csv");
    REQUIRE(residuals.size() == 5); // header + jmax rows
    // first coefficient is 4/pi^2
    std::istringstream ss(residuals[1]);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(0.405285).epsilon(1e-4));

    const auto decay = read_lines(dir / "truncation_decay.csv");
    REQUIRE(decay.size() == 6); // header + default 5 degrees
}

TEST_CASE("train on a reduced workload writes checkpoint, logs, metrics, manifest") {
    const auto data_dir = fresh_dir("train_data");
    // small dataset via generate + truncation is avoided: use the full generator
    // but train with tiny epochs so the test stays fast
    CHECK(run_cli({"generate", "--task", "gap-rule", "--seed", "3",
                   "--out-dir", data_dir.string()}) == 0);

    const auto out = fresh_dir("train_out");
    const int code = run_cli({"train", "--data-dir", data_dir.string(), "--vocab", "20",
                              "--embedder", "bochner-nonparam", "--d", "8", "--event-dim", "16",
                              "--mlp-hidden", "24", "--max-seq-len", "4", "--epochs", "1",
                              "--batch", "128", "--seed", "11", "--out-dir", out.string()});
    CHECK(code == 0);
    CHECK(fs::exists(out / "checkpoint.bin"));
    CHECK(fs::exists(out / "epochs.csv"));
    CHECK(fs::exists(out / "timing.csv"));
    CHECK(fs::exists(out / "metrics.json"));
    const auto metrics = nlohmann::json::parse(std::ifstream(out / "metrics.json"));
    CHECK(metrics["epochs_run"] == 1);
    CHECK(metrics["test"]["accuracy"].get<double>() >= 0.0);

    // exports from the freshly written checkpoint
    const auto exp_dir = fresh_dir("export_out");
    CHECK(run_cli({"export", "--what", "gram", "--checkpoint", (out / "checkpoint.bin").string(),
                   "--grid", "0:3:1", "--out-dir", exp_dir.string()}) == 0);
    const auto gram = read_lines(exp_dir / "gram.csv");
    REQUIRE(gram.size() == 5); // header + 4 grid rows
    REQUIRE(gram[0] == "t,k_0,k_1,k_2,k_3");
    // symmetric: entry (1,3) equals (3,1)
    auto cell_at = [&](int row, int col) {
        std::istringstream ss(gram[row]);
        std::string cell;
        for (int c = 0; c <= col; ++c) std::getline(ss, cell, ',');
        return cell;
    };
    CHECK(cell_at(1, 3) == cell_at(3, 1));

    CHECK(run_cli({"export", "--what", "phi", "--checkpoint", (out / "checkpoint.bin").string(),
                   "--grid", "0,1,2", "--out-dir", exp_dir.string()}) == 0);
    const auto phi = read_lines(exp_dir / "phi.csv");
    REQUIRE(phi.size() == 4);

    CHECK(run_cli({"export", "--what", "attention", "--checkpoint",
                   (out / "checkpoint.bin").string(), "--task", "periodic", "--times", "40:45:1",
                   "--seed", "2", "--out-dir", exp_dir.string()}) == 0);
    const auto att = read_lines(exp_dir / "attention.csv");
    REQUIRE(att.size() >= 2);
    {
        std::istringstream ss(att[1]);
        std::string cell;
        std::getline(ss, cell, ','); // target_time
        double sum = 0.0;
        while (std::getline(ss, cell, ',')) sum += std::stod(cell);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }

    // missing checkpoint is an input error
    CHECK(run_cli({"export", "--what", "phi", "--checkpoint", (out / "nope.bin").string(),
                   "--out-dir", exp_dir.string()}) == 3);
}

TEST_CASE("mercer-only flags are rejected for other embedders") {
    const auto out = fresh_dir("flag_check");
    CHECK(run_cli({"train", "--task", "gap-rule", "--embedder", "bochner-nonparam", "--k", "3",
                   "--epochs", "1", "--out-dir", out.string()}) == 2);
    CHECK(run_cli({"train", "--task", "gap-rule", "--embedder", "mercer", "--d", "4", "--epochs",
                   "1", "--out-dir", out.string()}) == 2);
}

TEST_CASE("reruns with identical flags reproduce output hashes") {
    const auto dir1 = fresh_dir("rerun1");
    const auto dir2 = fresh_dir("rerun2");
    const std::vector<std::string> args{"mercer-check", "--kernel", "cosine", "--jmax", "2",
                                        "--seed", "9"};
    auto with_dir = [&](const fs::path& d) {
        auto a = args;
        a.push_back("--out-dir");
        a.push_back(d.string());
        return a;
    };
    CHECK(run_cli(with_dir(dir1)) == 0);
    CHECK(run_cli(with_dir(dir2)) == 0);
    const auto m1 = nlohmann::json::parse(std::ifstream(dir1 / "manifest.json"));
    const auto m2 = nlohmann::json::parse(std::ifstream(dir2 / "manifest.json"));
    CHECK(m1["outputs"] == m2["outputs"]);
    CHECK(tempo::io::fnv1a_file((dir1 / "eigen_residuals.csv").string()) ==
          tempo::io::fnv1a_file((dir2 / "eigen_residuals.csv").string()));
}

TEST_CASE("generate writes the dataset files and the task card") {
    const auto dir = fresh_dir("generate");
    CHECK(run_cli({"generate", "--task", "gap-rule", "--seed", "4", "--out-dir", dir.string()}) == 0);
    for (const auto* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "task.json"}) {
        CHECK(fs::exists(dir / name));
    }
    const auto task = nlohmann::json::parse(std::ifstream(dir / "task.json"));
    CHECK(task["bayes_with_gaps"] == 1.0);
    CHECK(task["bayes_without_gaps"].get<double>() == doctest::Approx(0.5913).epsilon(1e-3));
    CHECK(read_lines(dir / "train.jsonl").size() == 2000);
}
