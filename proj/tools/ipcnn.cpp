#include "ipcnn/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace cli = ipcnn::cli;

int main(int argc, char** argv)
{
    CLI::App app{"Delay-line photonic CNN simulator and design-space tool"};
    app.require_subcommand(1);
    // Global flags may appear after the subcommand too.
    app.fallthrough();
    app.set_version_flag("--version", std::string(cli::tool_version));

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int threads = 1;
    app.add_option("--config", config_path, "JSON experiment config (defaults apply when omitted)");
    app.add_option("--seed", seed, "Override the config's seed");
    app.add_option("--out-dir", out_dir, "Directory for outputs; relative checkpoint paths resolve here");
    app.add_option("--threads", threads, "Worker threads for sweeps")->check(CLI::Range(1, 1024));

    std::optional<int> corrupt_offset;
    auto* verify = app.add_subcommand("verify-equivalence", "Randomized delay-line vs im2col check");
    verify->add_option("--corrupt-offset", corrupt_offset,
                       "Test mode: shift this tap of the offset table by one cycle")
        ->check(CLI::NonNegativeNumber);
    auto* train = app.add_subcommand("train", "Train the digital reference network on MNIST");
    auto* infer = app.add_subcommand("infer", "Digital and simulated-hardware inference");
    auto* sweep_noise = app.add_subcommand("sweep-noise", "Accuracy versus relative NEOP");
    auto* sweep_imbalance = app.add_subcommand("sweep-imbalance", "Accuracy versus path imbalance");
    auto* design_space = app.add_subcommand("design-space", "Scale grid, speed curves and energy tables");
    auto* energy = app.add_subcommand("energy", "Power budgets and efficiency per architecture");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::exit_code::ok : cli::exit_code::config;
    }

    try {
        cli::Context ctx;
        ctx.config = config_path.empty() ? cli::ExperimentConfig{} : cli::load_config(config_path);
        if (seed) {
            ctx.config.seed = *seed;
        }
        ctx.out_dir = out_dir;
        ctx.threads = threads;
        std::filesystem::create_directories(ctx.out_dir);

        cli::CommandResult result;
        if (verify->parsed()) {
            result = cli::cmd_verify_equivalence(ctx, corrupt_offset);
        } else if (train->parsed()) {
            result = cli::cmd_train(ctx);
        } else if (infer->parsed()) {
            result = cli::cmd_infer(ctx);
        } else if (sweep_noise->parsed()) {
            result = cli::cmd_sweep_noise(ctx);
        } else if (sweep_imbalance->parsed()) {
            result = cli::cmd_sweep_imbalance(ctx);
        } else if (design_space->parsed()) {
            result = cli::cmd_design_space(ctx);
        } else if (energy->parsed()) {
            result = cli::cmd_energy(ctx);
        }
        for (const auto& f : result.outputs) {
            std::cout << (ctx.out_dir / f).string() << "\n";
        }
        return result.exit;
    } catch (const ipcnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::exit_code::config;
    } catch (const ipcnn::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return cli::exit_code::io;
    } catch (const ipcnn::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return cli::exit_code::io;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return cli::exit_code::io;
    } catch (const ipcnn::InvalidSpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::exit_code::config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::exit_code::failure;
    }
}
