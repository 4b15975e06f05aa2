#include "mv/config.hpp"

#include <cstdlib>
#include <type_traits>
#include <stdexcept>
#include <string>

namespace mv {

void HeuristicParams::validate() const {
    if (k1 == 0 || k2 == 0 || k3 == 0 || s == 0 || l == 0) {
        throw std::invalid_argument("heuristic counts must be positive");
    }
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("P must lie in (0, 1]");
    if (scanPeriod.count() <= 0) throw std::invalid_argument("scan period must be positive");
}

void Config::validate() const {
    if (tableBits < 4 || tableBits > 30) throw std::invalid_argument("tableBits out of range [4, 30]");
    if (maxThreads == 0 || maxThreads >= (1u << 16) - 1) {
        throw std::invalid_argument("maxThreads out of range");
    }
    heuristics.validate();
}

namespace {

template <class T>
void readEnv(const char* name, T& out) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return;
    try {
        if constexpr (std::is_same_v<T, double>) {
            out = std::stod(v);
        } else if constexpr (std::is_same_v<T, bool>) {
            out = std::stoi(v) != 0;
        } else {
            out = static_cast<T>(std::stoul(v));
        }
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("bad value for ") + name + ": " + v);
    }
}

}  // namespace

Config Config::fromEnv(Config base) {
    readEnv("MV_TABLE_BITS", base.tableBits);
    readEnv("MV_MAX_THREADS", base.maxThreads);
    readEnv("MV_K1", base.heuristics.k1);
    readEnv("MV_K2", base.heuristics.k2);
    readEnv("MV_K3", base.heuristics.k3);
    readEnv("MV_S", base.heuristics.s);
    readEnv("MV_L", base.heuristics.l);
    readEnv("MV_P", base.heuristics.p);
    uint32_t scanMs = static_cast<uint32_t>(base.heuristics.scanPeriod.count());
    readEnv("MV_SCAN_MS", scanMs);
    base.heuristics.scanPeriod = std::chrono::milliseconds(scanMs);
    readEnv("MV_EBR_POISON", base.ebrPoison);
    base.validate();
    return base;
}

}  // namespace mv
