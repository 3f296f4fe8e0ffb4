#include "sirbif/cli.hpp"

#include <cmath>
#include <cstdlib>

namespace sirbif::cli {

namespace detail {
extern const char* const config_schema_text;
}

const json& config_schema()
{
    static const json schema = json::parse(detail::config_schema_text);
    return schema;
}

namespace {

bool has_type(const json& v, const std::string& type)
{
    if (type == "object")
        return v.is_object();
    if (type == "array")
        return v.is_array();
    if (type == "string")
        return v.is_string();
    if (type == "boolean")
        return v.is_boolean();
    if (type == "integer")
        return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (type == "number")
        return v.is_number();
    if (type == "null")
        return v.is_null();
    return false;
}

std::string pointer_escape(const std::string& key)
{
    std::string out;
    for (char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

void check(const json& v, const json& s, const std::string& at, std::vector<std::string>& errors)
{
    const std::string where = at.empty() ? "/" : at;
    if (s.contains("type") && !has_type(v, s["type"].get<std::string>())) {
        errors.push_back(where + ": expected " + s["type"].get<std::string>());
        return;
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"])
            found = found || e == v;
        if (!found)
            errors.push_back(where + ": value " + v.dump() + " is not one of " + s["enum"].dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (s.contains("minimum") && x < s["minimum"].get<double>())
            errors.push_back(where + ": " + v.dump() + " is below the minimum " + s["minimum"].dump());
        if (s.contains("maximum") && x > s["maximum"].get<double>())
            errors.push_back(where + ": " + v.dump() + " is above the maximum " + s["maximum"].dump());
        if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>()))
            errors.push_back(where + ": " + v.dump() + " must exceed " + s["exclusiveMinimum"].dump());
        if (s.contains("exclusiveMaximum") && !(x < s["exclusiveMaximum"].get<double>()))
            errors.push_back(where + ": " + v.dump() + " must be below " + s["exclusiveMaximum"].dump());
    }
    if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s["minLength"].get<std::size_t>())
        errors.push_back(where + ": string is too short");
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            errors.push_back(where + ": expected at least " + s["minItems"].dump() + " items");
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
            errors.push_back(where + ": expected at most " + s["maxItems"].dump() + " items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i)
                check(v[i], s["items"], at + "/" + std::to_string(i), errors);
    }
    if (v.is_object()) {
        const json props = s.value("properties", json::object());
        if (s.contains("required"))
            for (const auto& r : s["required"])
                if (!v.contains(r.get<std::string>()))
                    errors.push_back(where + ": missing required key \"" + r.get<std::string>() + "\"");
        for (const auto& [key, val] : v.items()) {
            const std::string child = at + "/" + pointer_escape(key);
            if (props.contains(key))
                check(val, props[key], child, errors);
            else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
                errors.push_back(child + ": unknown key");
        }
    }
}

std::pair<double, double> pair_of(const json& a) { return {a[0].get<double>(), a[1].get<double>()}; }

void require_increasing(const std::pair<double, double>& w, const char* what)
{
    if (!(w.first < w.second))
        throw ConfigError(std::string(what) + ": lower bound must be below upper bound");
}

}  // namespace

std::vector<std::string> validate_schema(const json& doc, const json& schema)
{
    std::vector<std::string> errors;
    check(doc, schema, "", errors);
    return errors;
}

std::string default_out_dir()
{
    const char* env = std::getenv("SIRBIF_OUT_DIR");
    return env && *env ? std::string(env) : std::string("out");
}

RunConfig load_config(const json& doc)
{
    const auto errors = validate_schema(doc, config_schema());
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors)
            msg += "\n  " + e;
        throw ConfigError(msg);
    }
    RunConfig cfg;
    cfg.out_dir = default_out_dir();
    if (doc.contains("preset")) {
        const Preset& p = find_preset(doc["preset"].get<std::string>());
        cfg.preset = p.id;
        cfg.params.gamma = p.gamma;
        cfg.params.rho = p.rho;
        cfg.portrait_window = p.window;
    }
    if (doc.contains("params")) {
        const json& p = doc["params"];
        cfg.params.beta = p.value("beta", cfg.params.beta);
        cfg.params.lambda = p.value("lambda", cfg.params.lambda);
        cfg.params.mu = p.value("mu", cfg.params.mu);
        cfg.params.mu_prime = p.value("mu_prime", cfg.params.mu_prime);
        cfg.params.alpha = p.value("alpha", cfg.params.alpha);
        cfg.params.gamma = p.value("gamma", cfg.params.gamma);
        cfg.params.rho = p.value("rho", cfg.params.rho);
    }
    cfg.name = doc.value("name", std::string{});
    cfg.out_dir = doc.value("out_dir", cfg.out_dir);
    if (doc.contains("active_param"))
        cfg.active = model::param_from_string(doc["active_param"].get<std::string>());
    if (doc.contains("range")) {
        cfg.range = pair_of(doc["range"]);
        if (cfg.range->first == cfg.range->second)
            throw ConfigError("range: the two ends must differ");
    }
    if (doc.contains("gamma_window"))
        cfg.gamma_window = pair_of(doc["gamma_window"]);
    if (doc.contains("rho_window"))
        cfg.rho_window = pair_of(doc["rho_window"]);
    require_increasing(cfg.gamma_window, "gamma_window");
    require_increasing(cfg.rho_window, "rho_window");
    if (doc.contains("s_window"))
        std::tie(cfg.portrait_window.s_min, cfg.portrait_window.s_max) = pair_of(doc["s_window"]);
    if (doc.contains("i_window"))
        std::tie(cfg.portrait_window.i_min, cfg.portrait_window.i_max) = pair_of(doc["i_window"]);
    require_increasing({cfg.portrait_window.s_min, cfg.portrait_window.s_max}, "s_window");
    require_increasing({cfg.portrait_window.i_min, cfg.portrait_window.i_max}, "i_window");
    if (doc.contains("grid")) {
        cfg.nx = doc["grid"][0].get<std::size_t>();
        cfg.ny = doc["grid"][1].get<std::size_t>();
    }
    cfg.budget = doc.value("budget", cfg.budget);
    cfg.threads = doc.value("threads", cfg.threads);
    cfg.cycle_slices = doc.value("cycle_slices", cfg.cycle_slices);
    if (doc.contains("tolerances")) {
        const json& t = doc["tolerances"];
        cfg.newton_tol = t.value("newton", cfg.newton_tol);
        cfg.h0 = t.value("h0", cfg.h0);
        cfg.hmax = t.value("hmax", cfg.hmax);
        cfg.integrator_rel = t.value("integrator_rel", cfg.integrator_rel);
        cfg.integrator_abs = t.value("integrator_abs", cfg.integrator_abs);
        cfg.shooting_tol = t.value("shooting", cfg.shooting_tol);
    }
    if (cfg.h0 > cfg.hmax)
        throw ConfigError("tolerances: h0 must not exceed hmax");
    if (doc.contains("seeds"))
        for (const auto& s : doc["seeds"])
            cfg.seeds.emplace_back(s["gamma"].get<double>(), s["rho"].get<double>());
    try {
        cfg.params.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }
    return cfg;
}

}  // namespace sirbif::cli
