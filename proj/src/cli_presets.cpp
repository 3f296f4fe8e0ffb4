#include "sirbif/cli.hpp"

#include <algorithm>

namespace sirbif::cli {

namespace {

using cycles::CycleStability;

Preset make(std::string id, double gamma, double rho, int endemic, std::vector<CycleStability> cyc, bool hom,
            std::vector<std::string> attractors, std::string summary)
{
    std::sort(attractors.begin(), attractors.end());
    Preset p;
    p.id = std::move(id);
    p.gamma = gamma;
    p.rho = rho;
    p.expected = ExpectedScenario{endemic, std::move(cyc), hom, std::move(attractors)};
    p.summary = std::move(summary);
    return p;
}

}  // namespace

const std::vector<Preset>& presets()
{
    using S = CycleStability;
    static const std::vector<Preset> table = {
        make("P1", 0.392, 0.19, 2, {}, false, {"e0", "e1"}, "bistable: e0 and the stable spiral e1, saddle e2"),
        make("P2", 0.392, 0.183711, 2, {}, true, {"e0", "e1"}, "homoclinic loop at e2 separates the basins"),
        make("P3", 0.392, 0.1825, 2, {S::Unstable}, false, {"e0", "e1"}, "unstable cycle around e1 is the separatrix"),
        make("P4", 0.392, 0.179, 2, {}, false, {"e0"}, "e1 unstable, no cycles: every orbit tends to e0"),
        make("P5", 0.392, 0.173, 0, {}, false, {"e0"}, "no endemic equilibria"),
        make("P6", 0.162, 0.007, 2, {}, false, {"e0", "e1"}, "bistable: e0 and the stable spiral e1"),
        make("P7", 0.162, 0.004, 2, {S::Stable}, false, {"cycle", "e0"}, "stable cycle around the unstable e1"),
        make("P8", 0.162, 0.002, 2, {}, false, {"e0", "e1"}, "bistable again below the Hopf point"),
        make("P9", 0.162, 0.001, 0, {}, false, {"e0"}, "no endemic equilibria"),
        make("P10", 0.3735, 0.137, 2, {}, false, {"e0", "e1"}, "bistable as at P1"),
        make("P11", 0.369662, 0.13, 2, {}, true, {"e0", "e1"}, "homoclinic loop at e2"),
        make("P12", 0.3699, 0.13, 2, {S::Unstable}, false, {"e0", "e1"}, "unstable cycle separatrix as at P3"),
        make("P13", 0.37013, 0.13, 2, {S::Stable, S::Unstable}, false, {"cycle", "e0"},
             "stable cycle inside an unstable cycle around the unstable e1"),
        make("P14", 0.370138, 0.13, 2, {S::Semistable}, false, {"cycle", "e0"}, "the two cycles merge: semistable cycle"),
        make("P15", 0.3735, 0.13, 2, {}, false, {"e0"}, "no cycles, e1 unstable: every orbit tends to e0"),
    };
    return table;
}

const Preset& find_preset(const std::string& id)
{
    for (const auto& p : presets())
        if (p.id == id)
            return p;
    throw ConfigError("unknown preset \"" + id + "\" (expected P1..P15)");
}

json presets_json()
{
    json arr = json::array();
    for (const auto& p : presets()) {
        json cyc = json::array();
        for (auto s : p.expected.cycles)
            cyc.push_back(std::string(cycles::to_string(s)));
        arr.push_back({{"id", p.id},
                       {"gamma", p.gamma},
                       {"rho", p.rho},
                       {"summary", p.summary},
                       {"expected",
                        {{"endemic_equilibria", p.expected.endemic},
                         {"cycles", cyc},
                         {"homoclinic", p.expected.homoclinic},
                         {"attractors", p.expected.attractors}}},
                       {"window", {{"S", {p.window.s_min, p.window.s_max}}, {"I", {p.window.i_min, p.window.i_max}}}}});
    }
    return arr;
}

}  // namespace sirbif::cli
