#include "sirbif/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace sirbif::cli {

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> preset, name, out_dir, active;
    std::optional<double> beta, lambda, mu, mu_prime, alpha, gamma, rho;
    std::vector<double> range, gamma_window, rho_window, s_window, i_window;
    std::vector<int> grid;
    std::optional<double> budget;
    std::optional<int> threads, cycle_slices;
    std::optional<double> newton, h0, hmax, integrator_rel, integrator_abs, shooting;
    std::vector<std::string> seeds;
};

void add_flags(CLI::App* cmd, Flags& f)
{
    cmd->add_option("--config", f.config, "JSON run configuration");
    cmd->add_option("--preset", f.preset, "scenario preset P1..P15");
    cmd->add_option("--name", f.name, "output file stem");
    cmd->add_option("--out-dir", f.out_dir, "output directory");
    cmd->add_option("--beta", f.beta);
    cmd->add_option("--lambda", f.lambda);
    cmd->add_option("--mu", f.mu);
    cmd->add_option("--mu-prime", f.mu_prime);
    cmd->add_option("--alpha", f.alpha);
    cmd->add_option("--gamma", f.gamma);
    cmd->add_option("--rho", f.rho);
    cmd->add_option("--active-param", f.active, "gamma or rho");
    cmd->add_option("--range", f.range, "FROM TO")->expected(2);
    cmd->add_option("--gamma-window", f.gamma_window, "LO HI")->expected(2);
    cmd->add_option("--rho-window", f.rho_window, "LO HI")->expected(2);
    cmd->add_option("--s-window", f.s_window, "LO HI")->expected(2);
    cmd->add_option("--i-window", f.i_window, "LO HI")->expected(2);
    cmd->add_option("--grid", f.grid, "NX NY")->expected(2);
    cmd->add_option("--budget", f.budget, "integration time budget per orbit");
    cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    cmd->add_option("--cycle-slices", f.cycle_slices, "slices per axis for homoclinic/LPC samples");
    cmd->add_option("--newton-tol", f.newton);
    cmd->add_option("--h0", f.h0);
    cmd->add_option("--hmax", f.hmax);
    cmd->add_option("--integrator-rel", f.integrator_rel);
    cmd->add_option("--integrator-abs", f.integrator_abs);
    cmd->add_option("--shooting-tol", f.shooting);
    cmd->add_option("--seed", f.seeds, "GAMMA,RHO (repeatable)");
}

json read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

/// Config document with the command-line flags laid over it.
json merged_document(const Flags& f)
{
    json doc = f.config.empty() ? json::object() : read_config_file(f.config);
    if (!doc.is_object())
        throw ConfigError("config root must be an object");
    auto set = [&doc](const char* key, const auto& v) {
        if (v)
            doc[key] = *v;
    };
    auto set_vec = [&doc](const char* key, const auto& v) {
        if (!v.empty())
            doc[key] = v;
    };
    set("preset", f.preset);
    set("name", f.name);
    set("out_dir", f.out_dir);
    set("active_param", f.active);
    set_vec("range", f.range);
    set_vec("gamma_window", f.gamma_window);
    set_vec("rho_window", f.rho_window);
    set_vec("s_window", f.s_window);
    set_vec("i_window", f.i_window);
    set_vec("grid", f.grid);
    set("budget", f.budget);
    set("threads", f.threads);
    set("cycle_slices", f.cycle_slices);

    auto set_in = [&doc](const char* obj, const char* key, const std::optional<double>& v) {
        if (!v)
            return;
        if (!doc.contains(obj))
            doc[obj] = json::object();
        doc[obj][key] = *v;
    };
    set_in("params", "beta", f.beta);
    set_in("params", "lambda", f.lambda);
    set_in("params", "mu", f.mu);
    set_in("params", "mu_prime", f.mu_prime);
    set_in("params", "alpha", f.alpha);
    set_in("params", "gamma", f.gamma);
    set_in("params", "rho", f.rho);
    set_in("tolerances", "newton", f.newton);
    set_in("tolerances", "h0", f.h0);
    set_in("tolerances", "hmax", f.hmax);
    set_in("tolerances", "integrator_rel", f.integrator_rel);
    set_in("tolerances", "integrator_abs", f.integrator_abs);
    set_in("tolerances", "shooting", f.shooting);

    if (!f.seeds.empty()) {
        json seeds = json::array();
        for (const auto& s : f.seeds) {
            const auto comma = s.find(',');
            try {
                if (comma == std::string::npos)
                    throw std::invalid_argument(s);
                std::size_t used = 0;
                const double g = std::stod(s.substr(0, comma), &used);
                const std::string rest = s.substr(comma + 1);
                std::size_t used_r = 0;
                const double r = std::stod(rest, &used_r);
                if (used != comma || used_r != rest.size())
                    throw std::invalid_argument(s);
                seeds.push_back({{"gamma", g}, {"rho", r}});
            } catch (const std::exception&) {
                throw ConfigError("--seed expects GAMMA,RHO, got \"" + s + "\"");
            }
        }
        doc["seeds"] = seeds;
    }
    return doc;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message)
{
    err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Bifurcation analysis of an SIR model with cautiousness and bed occupancy", "sirbif"};
    app.require_subcommand(1);
    Flags flags;
    struct Command {
        const char* name;
        const char* help;
        json (*fn)(const RunConfig&);
    };
    const Command commands[] = {
        {"equilibria", "equilibria, eigenvalues and R0", cmd_equilibria},
        {"diagram", "two-parameter bifurcation diagram (CSV + SVG)", cmd_diagram},
        {"portrait", "phase portrait with cycles and separatrices (CSV + SVG)", cmd_portrait},
        {"sweep", "one-parameter sweep with ordered events", cmd_sweep},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_flags(sub, flags);
        subs.push_back(sub);
    }
    auto* presets_cmd = app.add_subcommand("presets", "scenario presets");
    presets_cmd->add_subcommand("list", "print the preset table");
    presets_cmd->require_subcommand(1);

    // CLI11 wants argv order reversed when given a vector.
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "config", e.what());
        return 2;
    }

    try {
        if (presets_cmd->parsed()) {
            out << presets_json().dump(2) << '\n';
            return 0;
        }
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed())
                continue;
            const RunConfig cfg = load_config(merged_document(flags));
            out << commands[i].fn(cfg).dump(2) << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        print_error(err, "config", e.what());
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        print_error(err, "io", e.what());
        return 3;
    } catch (const std::exception& e) {
        print_error(err, "solver", e.what());
        return 3;
    }
    return 0;
}

}  // namespace sirbif::cli
