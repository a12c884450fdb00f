// Serves a synthetic oracle over the JSON-lines classifier protocol on
// stdin/stdout. Misbehaviour modes exist for exercising the adapter.
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "bdt/blackbox.hpp"

namespace {

void usage() {
    std::cerr << "usage: bdt_oracle_server SPEC.json [--mode ok|bad-id|garbage|hang|exit] [--after N]\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage();
        return 1;
    }
    std::string mode = "ok";
    long after = 0;
    for (int i = 2; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--mode" && i + 1 < argc) {
            mode = argv[++i];
        } else if (a == "--after" && i + 1 < argc) {
            after = std::atol(argv[++i]);
        } else {
            usage();
            return 1;
        }
    }
    bdt::SyntheticOracle oracle(bdt::load_oracle_spec(argv[1]));

    long served = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        const auto request = nlohmann::json::parse(line);
        const std::uint64_t id = request.at("id").get<std::uint64_t>();
        if (request.contains("op")) {
            std::cout << nlohmann::json{{"id", id}, {"num_classes", oracle.num_classes()}}.dump() << std::endl;
            continue;
        }
        if (served++ >= after) {
            if (mode == "bad-id") {
                std::cout << nlohmann::json{{"id", id + 7}, {"label", 0}}.dump() << std::endl;
                continue;
            }
            if (mode == "garbage") {
                std::cout << "not json" << std::endl;
                continue;
            }
            if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
            if (mode == "exit") return 0;
        }
        const bdt::Shape shape{request.at("h").get<std::uint32_t>(), request.at("w").get<std::uint32_t>(),
                               request.at("c").get<std::uint32_t>()};
        const auto data = request.at("data").get<std::vector<float>>();
        const bdt::ImageTensor image(shape, data);
        std::cout << nlohmann::json{{"id", id}, {"label", oracle.classify(image).value}}.dump() << std::endl;
    }
    return 0;
}
