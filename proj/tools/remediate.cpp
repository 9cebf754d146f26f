// remediate: command line front end.
//
//   remediate generate|evaluate|backtest|simulate|report --config <json> --out <dir>
//             [--seed <n>] [--format csv|json] [--truncate-visits <n_slr>,<n_hvi>]
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "remediate/config.hpp"
#include "remediate/error.hpp"
#include "remediate/report.hpp"

namespace fs = std::filesystem;
using namespace remediate;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string format = "csv";
    std::string truncate;
};

void add_common(CLI::App* cmd, Options& o, bool truncation) {
    cmd->add_option("--config", o.config, "JSON configuration file")->required();
    cmd->add_option("--out", o.out, "output directory")->required();
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
    cmd->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    if (truncation) {
        cmd->add_option("--truncate-visits", o.truncate,
                        "summarize only the first <n_slr> replacement visits and <n_hvi> inspections");
    }
}

fs::path config_dir(const std::string& config) {
    const auto parent = fs::path(config).parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

void print_run(const Bundle& b) {
    const auto s = nlohmann::json::parse(b.files.at("summary.json"));
    auto show = [](const nlohmann::json& v) { return v.is_null() ? std::string("n/a") : v.dump(); };
    std::cout << "hit_rate " << show(s.at("hit_rate")) << "  effective_cost " << show(s.at("effective_cost"));
    if (s.contains("savings_vs_baseline")) std::cout << "  savings_vs_baseline " << show(s.at("savings_vs_baseline"));
    std::cout << '\n';
}

int run(const std::string& command, const Options& o) {
    const auto format = parse_table_format(o.format);
    const auto raw = load_json_file(o.config);
    const auto base = config_dir(o.config);
    std::optional<Truncation> truncation;
    if (!o.truncate.empty()) truncation = parse_truncation(o.truncate);

    Bundle bundle;
    if (command == "generate") {
        auto cfg = parse_synthetic_config(raw);
        if (o.seed) cfg.seed = *o.seed;
        bundle = generate_bundle(cfg);
    } else if (command == "evaluate") {
        auto cfg = parse_evaluate_config(raw, base);
        if (o.seed) reseed(cfg, *o.seed);
        bundle = evaluate_bundle(cfg, format);
    } else if (command == "backtest" || command == "simulate") {
        auto cfg = parse_run_config(raw, base, command);
        if (o.seed) reseed(cfg, *o.seed);
        if (truncation) cfg.experiment.truncate = truncation;
        bundle = run_bundle(cfg, format, command);
        print_run(bundle);
    } else {
        if (!raw.is_object() || !raw.contains("bundles") || !raw.at("bundles").is_array()) {
            throw ConfigError("report config needs a 'bundles' array");
        }
        std::vector<fs::path> dirs;
        for (const auto& d : raw.at("bundles")) {
            if (!d.is_string()) throw ConfigError("report bundles must be paths");
            fs::path p(d.get<std::string>());
            dirs.push_back(p.is_relative() ? (base / p).lexically_normal() : p);
        }
        bundle = report_bundle(dirs, truncation, format);
    }
    bundle.write(o.out);
    std::cout << command << ": wrote " << bundle.files.size() << " files to " << o.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lead service line remediation simulator"};
    app.require_subcommand(1);
    Options opts;
    for (const char* name : {"generate", "evaluate", "backtest", "simulate", "report"}) {
        const std::string n(name);
        auto* cmd = app.add_subcommand(n, n == "generate"   ? "write a synthetic city (parcels + hidden truth)"
                                          : n == "evaluate" ? "evaluate the hazard model on labeled data"
                                          : n == "backtest" ? "replay a policy against a fully labeled city"
                                          : n == "simulate" ? "run a policy in a generative environment"
                                                            : "re-summarize existing run bundles");
        add_common(cmd, opts, n == "backtest" || n == "simulate" || n == "report");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
