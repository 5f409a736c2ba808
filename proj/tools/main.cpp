#include "ablab/config.hpp"
#include "ablab/error.hpp"
#include "ablab/report.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace {

int run_command(const std::string &cfg_path, const CLI::Option *mode_opt,
                const std::string &mode, const CLI::Option *world_opt, std::size_t world,
                const CLI::Option *groups_opt, std::size_t groups,
                const CLI::Option *seed_opt, std::uint64_t seed, const CLI::Option *out_opt,
                const std::string &out) {
    ablab::config::RunConfig cfg = ablab::config::load_config_file(cfg_path);
    if (mode_opt->count())
        cfg.mode = ablab::abtrain::parse_run_mode(mode);
    if (world_opt->count())
        cfg.world_size = world;
    if (groups_opt->count())
        cfg.num_groups = groups;
    if (seed_opt->count())
        cfg.seed = seed;
    if (out_opt->count())
        cfg.out_dir = out;
    ablab::report::RunResult result = ablab::report::execute_run(cfg);
    ablab::report::emit_reports({result}, cfg.out_dir, ablab::config::config_to_json(cfg));
    ablab::report::print_summary(std::cout, result);
    std::cout << "reports written to " << cfg.out_dir << '\n';
    return 0;
}

int sweep_command(const std::string &cfg_path, const std::vector<std::size_t> &nodes,
                  const std::string &scaling_str, const CLI::Option *out_opt,
                  const std::string &out) {
    ablab::config::RunConfig base = ablab::config::load_config_file(cfg_path);
    if (out_opt->count())
        base.out_dir = out;
    const ablab::config::Scaling scaling = ablab::config::parse_scaling(scaling_str);
    std::vector<ablab::report::RunResult> results =
        ablab::report::execute_sweep(base, nodes, scaling);
    nlohmann::json echo;
    echo["base"] = ablab::config::config_to_json(base);
    echo["sweep"]["nodes"] = nodes;
    echo["sweep"]["scaling"] = ablab::config::scaling_name(scaling);
    ablab::report::emit_reports(results, base.out_dir, echo);
    for (const ablab::report::RunResult &r : results)
        ablab::report::print_summary(std::cout, r);
    std::cout << "reports written to " << base.out_dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"low-rank grouped data-parallel training laboratory"};
    app.require_subcommand(1);

    std::string run_cfg, run_mode, run_out;
    std::size_t run_world = 0, run_groups = 0;
    std::uint64_t run_seed = 0;
    CLI::App *run = app.add_subcommand("run", "train one configuration and emit reports");
    run->add_option("--config", run_cfg, "JSON config path")->required();
    CLI::Option *mode_opt =
        run->add_option("--mode", run_mode, "traddp | ab_groups | ab_no_groups");
    CLI::Option *world_opt = run->add_option("--world-size", run_world, "worker count");
    CLI::Option *groups_opt = run->add_option("--num-groups", run_groups, "subgroup count");
    CLI::Option *seed_opt = run->add_option("--seed", run_seed, "run seed");
    CLI::Option *out_opt = run->add_option("--out", run_out, "output directory");

    std::string sweep_cfg, sweep_scaling, sweep_out;
    std::vector<std::size_t> sweep_nodes;
    CLI::App *sweep = app.add_subcommand("sweep", "scaling sweep over node counts");
    sweep->add_option("--config", sweep_cfg, "JSON config path")->required();
    sweep->add_option("--nodes", sweep_nodes, "comma-separated node counts")
        ->required()
        ->delimiter(',');
    sweep->add_option("--scaling", sweep_scaling, "local | global")->required();
    CLI::Option *sweep_out_opt = sweep->add_option("--out", sweep_out, "output directory");

    std::string report_dir;
    CLI::App *rep = app.add_subcommand("report", "summarize an output directory");
    rep->add_option("--in", report_dir, "directory with emitted reports")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return run_command(run_cfg, mode_opt, run_mode, world_opt, run_world, groups_opt,
                               run_groups, seed_opt, run_seed, out_opt, run_out);
        if (sweep->parsed())
            return sweep_command(sweep_cfg, sweep_nodes, sweep_scaling, sweep_out_opt,
                                 sweep_out);
        if (rep->parsed()) {
            ablab::report::summarize_dir(std::cout, report_dir);
            return 0;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
