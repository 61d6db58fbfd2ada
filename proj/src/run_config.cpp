#include "aarr/run_config.hpp"

#include <fstream>

namespace aarr {

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"synthetic", c.synthetic},
                       {"train", c.train},
                       {"paths", {{"data_dir", c.data_dir}, {"out_dir", c.out_dir}, {"checkpoint", c.checkpoint}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "synthetic") {
            from_json(value, c.synthetic);
        } else if (key == "train") {
            from_json(value, c.train);
        } else if (key == "paths") {
            if (!value.is_object()) throw std::invalid_argument("run config: paths must be an object");
            for (const auto& [pk, pv] : value.items()) {
                if (pk == "data_dir") c.data_dir = pv.get<std::string>();
                else if (pk == "out_dir") c.out_dir = pv.get<std::string>();
                else if (pk == "checkpoint") c.checkpoint = pv.get<std::string>();
                else throw std::invalid_argument("unknown paths key '" + pk + "'");
            }
        } else {
            throw std::invalid_argument("unknown run config key '" + key + "'");
        }
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    RunConfig c;
    try {
        from_json(j, c);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return c;
}

void write_resolved_config(const RunConfig& c, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.resolved.json") << nlohmann::json(c).dump(2) << '\n';
}

}  // namespace aarr
