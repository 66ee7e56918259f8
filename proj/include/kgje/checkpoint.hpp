#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "kgje/adam.hpp"

namespace kgje {

// Binary checkpoint:
//   magic "KGJE" | u32 LE version | u32 LE record count
//   records: u16 LE name length | name | u8 rank | rank x u32 LE dims |
//            row-major f32 LE payload
//   trailer: u32 LE byte length | UTF-8 key=value lines (config snapshot
//            plus ckpt.* metadata)
// Round trips are bit-exact.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;
    std::map<std::string, std::string> config;  // snapshot + ckpt.* metadata
    ParamStore params;

    void set_meta(const std::string& key, const std::string& value) { config["ckpt." + key] = value; }
    std::string meta(const std::string& key, const std::string& fallback = "") const {
        auto it = config.find("ckpt." + key);
        return it == config.end() ? fallback : it->second;
    }
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kgje
