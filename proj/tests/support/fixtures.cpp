#include "fixtures.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fixtures {

std::string config_path(const std::string& name) {
    return std::string(RANDCTL_CONFIG_DIR) + "/" + name + ".json";
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

randctl::RunConfig load(const std::string& name, const Patch& patch) {
    auto doc = nlohmann::json::parse(read_text(config_path(name)));
    if (patch) {
        patch(doc);
    }
    return randctl::load_config(doc.dump());
}

} // namespace fixtures
