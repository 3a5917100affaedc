#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "voxflow/persist.hpp"

using namespace voxflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

RunResult run_cli(const TempDir& tmp, const std::string& args) {
    const fs::path out_file = tmp.path / "stdout.txt";
    const fs::path err_file = tmp.path / "stderr.txt";
    const std::string cmd = std::string(VOXFLOW_CLI_PATH) + " " + args + " >" +
                            out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out_file);
    r.err = read_text(err_file);
    return r;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.find(" = ");
        if (pos != std::string::npos) kv[line.substr(0, pos)] = line.substr(pos + 3);
    }
    return kv;
}

// Small toy setup shared by the fast end-to-end runs.
const std::string kToyFlags =
    " --set n_st=8 --set n_slat=8 --set c_slat=4 --set arch_layers=2 --set arch_model_dim=16"
    " --set arch_heads=2 --set steps=4";

}  // namespace

TEST_CASE("gen, invert, edit, and metrics chain end to end") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_chain");
    const std::string a = (tmp.path / "a").string();
    const std::string inv = (tmp.path / "inv").string();
    const std::string e = (tmp.path / "e").string();
    const std::string m = (tmp.path / "m").string();

    RunResult gen = run_cli(tmp, "gen --out " + a + kToyFlags);
    REQUIRE(gen.code == 0);
    CHECK(fs::exists(tmp.path / "a" / "asset" / "st.vxg"));
    CHECK(fs::exists(tmp.path / "a" / "asset" / "slat.vxs"));
    CHECK(fs::exists(tmp.path / "a" / "mask.vxg"));
    CHECK(fs::exists(tmp.path / "a" / "run.json"));
    const auto gen_kv = parse_kv(gen.out);
    CHECK(gen_kv.at("asset_checksum").find("fnv1a64:") != std::string::npos);
    CHECK(gen_kv.at("empty_region") == "false");
    CHECK(std::stoul(gen_kv.at("mask_count")) > 0u);

    RunResult invert = run_cli(tmp, "invert --in " + a + "/asset --out " + inv + kToyFlags);
    REQUIRE(invert.code == 0);
    CHECK(fs::exists(tmp.path / "inv" / "inversion" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "inv" / "inversion" / "st_trajectory" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "inv" / "inversion" / "st_kv"));
    const auto inv_kv = parse_kv(invert.out);
    // 4 uniform steps under default [0.5, 1] gating: 8 endpoint/midpoint calls
    // plus 4 second passes; each eval captures both layers.
    CHECK(inv_kv.at("st_field_evals") == "12");
    CHECK(inv_kv.at("st_kv_entries") == "24");
    CHECK(inv_kv.at("asset_checksum") == gen_kv.at("asset_checksum"));

    RunResult edit = run_cli(tmp, "edit --in " + a + "/asset --mask " + a +
                                      "/mask.vxg --out " + e + " --inversion " + inv +
                                      "/inversion" + kToyFlags);
    REQUIRE(edit.code == 0);
    CHECK(fs::exists(tmp.path / "e" / "asset" / "st.vxg"));
    const auto edit_kv = parse_kv(edit.out);
    CHECK(edit_kv.at("input_checksum") == gen_kv.at("asset_checksum"));
    CHECK(edit_kv.at("preserved_grid_checksum_in") == edit_kv.at("preserved_grid_checksum_out"));
    CHECK(edit_kv.at("keep_features_checksum_in") == edit_kv.at("keep_features_checksum_out"));
    CHECK(edit_kv.at("st_invert_evals") == "12");
    CHECK(edit_kv.at("st_edit_evals") == "13");  // adds the gated t=1 endpoint

    RunResult metrics = run_cli(tmp, "metrics --in " + e + "/asset --ref " + a +
                                         "/asset --mask " + a + "/mask.vxg --out " + m +
                                         kToyFlags);
    REQUIRE(metrics.code == 0);
    const auto met_kv = parse_kv(metrics.out);
    // Preservation outside the dilated mask is bitwise, so the complement
    // point sets coincide and preserved projection pixels match exactly.
    CHECK(std::stod(met_kv.at("chamfer")) == 0.0);
    CHECK(std::stod(met_kv.at("masked_psnr")) == 99.0);
    CHECK(std::stod(met_kv.at("masked_ssim")) <= 1.0);
    CHECK(fs::exists(tmp.path / "m" / "run.json"));
}

TEST_CASE("an empty edit region reproduces the input asset exactly") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_noop");
    const std::string flags =
        " --set n_st=4 --set n_slat=4 --set c_slat=4 --set arch_layers=2"
        " --set arch_model_dim=16 --set arch_heads=2 --set steps=3"
        " --set region=ball:0.031,0.031,0.031,0.01";
    const std::string a = (tmp.path / "a").string();
    const std::string e = (tmp.path / "e").string();
    const std::string m = (tmp.path / "m").string();

    RunResult gen = run_cli(tmp, "gen --out " + a + flags);
    REQUIRE(gen.code == 0);
    const auto gen_kv = parse_kv(gen.out);
    CHECK(gen_kv.at("mask_count") == "0");
    CHECK(gen_kv.at("empty_region") == "true");

    RunResult edit = run_cli(
        tmp, "edit --in " + a + "/asset --mask " + a + "/mask.vxg --out " + e + flags);
    REQUIRE(edit.code == 0);
    const auto edit_kv = parse_kv(edit.out);
    CHECK(edit_kv.at("input_checksum") == edit_kv.at("output_checksum"));
    CHECK(edit_kv.at("new_coords") == "0");
    CHECK(edit_kv.at("slat_kv_replacement_used") == "true");

    RunResult metrics = run_cli(tmp, "metrics --in " + e + "/asset --ref " + a +
                                         "/asset --mask " + a + "/mask.vxg --out " + m + flags);
    REQUIRE(metrics.code == 0);
    const auto met_kv = parse_kv(metrics.out);
    CHECK(std::stod(met_kv.at("chamfer")) == 0.0);
    CHECK(std::stod(met_kv.at("masked_psnr")) == 99.0);
    CHECK(std::stod(met_kv.at("masked_ssim")) == 1.0);
}

TEST_CASE("usage problems exit with code 2") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_usage");
    const std::string out = (tmp.path / "o").string();

    CHECK(run_cli(tmp, "").code == 2);                        // missing subcommand
    CHECK(run_cli(tmp, "frobnicate").code == 2);              // unknown verb
    CHECK(run_cli(tmp, "gen --out " + out + " --bogus").code == 2);

    RunResult unknown_key = run_cli(tmp, "gen --out " + out + " --set stepz=10");
    CHECK(unknown_key.code == 2);
    CHECK(unknown_key.err.find("unknown config key") != std::string::npos);

    CHECK(run_cli(tmp, "gen --out " + out + " --set steps").code == 2);
    RunResult bad_value = run_cli(tmp, "gen --out " + out + " --set steps=banana");
    CHECK(bad_value.code == 2);
    CHECK(bad_value.err.find("steps") != std::string::npos);

    RunResult help = run_cli(tmp, "--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("Usage") != std::string::npos);
}

TEST_CASE("missing or corrupt inputs exit with code 3") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_io");
    const std::string a = (tmp.path / "a").string();
    const std::string out = (tmp.path / "o").string();
    const std::string flags = " --set n_st=4 --set n_slat=4 --set c_slat=3";

    RunResult missing = run_cli(tmp, "invert --in " + (tmp.path / "nope").string() +
                                         " --out " + out + flags);
    CHECK(missing.code == 3);
    CHECK(missing.err.find("error:") != std::string::npos);

    REQUIRE(run_cli(tmp, "gen --out " + a + flags).code == 0);
    {
        std::fstream f(tmp.path / "a" / "asset" / "st.vxg",
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(32);
        char c = 0x7f;
        f.write(&c, 1);
    }
    RunResult corrupt = run_cli(tmp, "invert --in " + a + "/asset --out " + out + flags);
    CHECK(corrupt.code == 3);
    CHECK(corrupt.err.find("checksum mismatch") != std::string::npos);
}

TEST_CASE("lattice shape mismatches exit with code 4") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_numeric");
    const std::string a4 = (tmp.path / "a4").string();
    const std::string a8 = (tmp.path / "a8").string();
    const std::string out = (tmp.path / "o").string();

    REQUIRE(run_cli(tmp, "gen --out " + a4 + " --set n_st=4 --set n_slat=4 --set c_slat=3").code ==
            0);
    REQUIRE(run_cli(tmp, "gen --out " + a8 + " --set n_st=8 --set n_slat=8 --set c_slat=3").code ==
            0);

    RunResult mixed = run_cli(tmp, "edit --in " + a8 + "/asset --mask " + a4 +
                                       "/mask.vxg --out " + out +
                                       " --set st_field=affine --set slat_field=affine");
    CHECK(mixed.code == 4);
    CHECK(mixed.err.find("dimensions") != std::string::npos);

    RunResult metrics = run_cli(tmp, "metrics --in " + a8 + "/asset --ref " + a4 +
                                         "/asset --out " + out);
    CHECK(metrics.code == 4);
}

TEST_CASE("editing against a stale bundle under a changed schedule exits with code 5") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_stale");
    const std::string flags =
        " --set n_st=4 --set n_slat=4 --set c_slat=4 --set arch_layers=2"
        " --set arch_model_dim=16 --set arch_heads=2";
    const std::string a = (tmp.path / "a").string();
    const std::string inv = (tmp.path / "inv").string();
    const std::string e = (tmp.path / "e").string();

    REQUIRE(run_cli(tmp, "gen --out " + a + flags).code == 0);
    REQUIRE(run_cli(tmp, "invert --in " + a + "/asset --out " + inv + flags +
                             " --set steps=25")
                .code == 0);

    // The bundle recorded a 25-step grid. Sampling on a 40-step grid asks the
    // K/V store for times it never saw; with latent replacement off the first
    // injected evaluation (t = 39/40) is the first cache probe.
    RunResult stale = run_cli(tmp, "edit --in " + a + "/asset --mask " + a +
                                       "/mask.vxg --out " + e + " --inversion " + inv +
                                       "/inversion" + flags +
                                       " --steps 40 --set latent_replacement=false");
    CHECK(stale.code == 5);
    CHECK(stale.err.find("KVKey{") != std::string::npos);

    // With latent replacement on, the per-step latent lookup misses first.
    RunResult traj = run_cli(tmp, "edit --in " + a + "/asset --mask " + a +
                                      "/mask.vxg --out " + e + " --inversion " + inv +
                                      "/inversion" + flags + " --steps 40");
    CHECK(traj.code == 5);
    CHECK(traj.err.find("trajectory cache miss") != std::string::npos);

    // Matching schedules succeed.
    RunResult ok = run_cli(tmp, "edit --in " + a + "/asset --mask " + a + "/mask.vxg --out " +
                                    e + " --inversion " + inv + "/inversion" + flags +
                                    " --set steps=25");
    CHECK(ok.code == 0);
}

TEST_CASE("repeated runs emit identical artifacts and comparable manifests") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_determinism");
    const std::string flags =
        " --set n_st=4 --set n_slat=4 --set c_slat=4 --set arch_layers=2"
        " --set arch_model_dim=16 --set arch_heads=2 --set steps=3";
    const std::string a1 = (tmp.path / "a1").string();
    const std::string a2 = (tmp.path / "a2").string();
    const std::string e1 = (tmp.path / "e1").string();
    const std::string e2 = (tmp.path / "e2").string();

    REQUIRE(run_cli(tmp, "gen --out " + a1 + flags).code == 0);
    REQUIRE(run_cli(tmp, "gen --out " + a2 + flags).code == 0);
    for (const char* rel : {"asset/st.vxg", "asset/slat.vxs", "mask.vxg"}) {
        CHECK(read_text(tmp.path / "a1" / rel) == read_text(tmp.path / "a2" / rel));
    }
    CHECK(manifest_comparable_text(tmp.path / "a1" / "run.json") ==
          manifest_comparable_text(tmp.path / "a2" / "run.json"));

    REQUIRE(run_cli(tmp, "edit --in " + a1 + "/asset --mask " + a1 + "/mask.vxg --out " + e1 +
                             flags)
                .code == 0);
    REQUIRE(run_cli(tmp, "edit --in " + a1 + "/asset --mask " + a1 + "/mask.vxg --out " + e2 +
                             flags)
                .code == 0);
    for (const char* rel : {"asset/st.vxg", "asset/slat.vxs"}) {
        CHECK(read_text(tmp.path / "e1" / rel) == read_text(tmp.path / "e2" / rel));
    }
    CHECK(manifest_comparable_text(tmp.path / "e1" / "run.json") ==
          manifest_comparable_text(tmp.path / "e2" / "run.json"));
}

TEST_CASE("seed resolution layers environment under file under flags") {
    TempDir tmp("voxflow_cli_seed");
    const std::string flags = " --set n_st=4 --set n_slat=4 --set c_slat=3";
    const fs::path cfg = tmp.path / "run.cfg";
    std::ofstream(cfg) << "seed = 77\n";
    setenv("VOXFLOW_SEED", "123", 1);

    const std::string g1 = (tmp.path / "g1").string();
    REQUIRE(run_cli(tmp, "gen --out " + g1 + flags).code == 0);
    CHECK(read_text(tmp.path / "g1" / "run.json").find("\"seed\": \"123\"") != std::string::npos);

    const std::string g2 = (tmp.path / "g2").string();
    REQUIRE(run_cli(tmp, "gen --out " + g2 + " --config " + cfg.string() + flags).code == 0);
    CHECK(read_text(tmp.path / "g2" / "run.json").find("\"seed\": \"77\"") != std::string::npos);

    const std::string g3 = (tmp.path / "g3").string();
    REQUIRE(run_cli(tmp, "gen --out " + g3 + " --config " + cfg.string() + " --seed 500" + flags)
                .code == 0);
    CHECK(read_text(tmp.path / "g3" / "run.json").find("\"seed\": \"500\"") != std::string::npos);

    unsetenv("VOXFLOW_SEED");
    const std::string g4 = (tmp.path / "g4").string();
    REQUIRE(run_cli(tmp, "gen --out " + g4 + flags).code == 0);
    CHECK(read_text(tmp.path / "g4" / "run.json").find("\"seed\": \"0\"") != std::string::npos);
}

TEST_CASE("solver order study runs from the command line") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_bench");
    const std::string out = (tmp.path / "b").string();

    RunResult bench = run_cli(
        tmp, "bench-order --out " + out + " --field linear --size 8 --steps-list 8 16 32");
    REQUIRE(bench.code == 0);
    const auto kv = parse_kv(bench.out);
    CHECK(std::stod(kv.at("taylor_slope")) == doctest::Approx(2.0).epsilon(0.2));
    CHECK(std::stod(kv.at("euler_slope")) == doctest::Approx(1.0).epsilon(0.2));

    RunResult toy = run_cli(tmp, "bench-order --out " + out + " --field toy");
    CHECK(toy.code == 2);
}

TEST_CASE("reconstruction verb reports per-stage errors") {
    unsetenv("VOXFLOW_SEED");
    TempDir tmp("voxflow_cli_recon");
    const std::string flags =
        " --set n_st=8 --set n_slat=8 --set c_slat=4 --set st_field=affine"
        " --set slat_field=affine --set guidance_omega=0 --set steps=16";
    const std::string a = (tmp.path / "a").string();
    const std::string r = (tmp.path / "r").string();

    REQUIRE(run_cli(tmp, "gen --out " + a + flags).code == 0);
    RunResult full = run_cli(tmp, "reconstruct --in " + a + "/asset --out " + r + flags);
    REQUIRE(full.code == 0);
    const auto full_kv = parse_kv(full.out);
    CHECK(std::stod(full_kv.at("st_rel_l2")) < 0.05);
    CHECK(std::stod(full_kv.at("slat_rel_l2")) < 0.05);

    RunResult st_only =
        run_cli(tmp, "reconstruct --in " + a + "/asset --out " + r + " --st-only" + flags);
    REQUIRE(st_only.code == 0);
    const auto st_kv = parse_kv(st_only.out);
    CHECK(std::stod(st_kv.at("slat_rel_l2")) > 10.0 * std::stod(full_kv.at("slat_rel_l2")));
}
