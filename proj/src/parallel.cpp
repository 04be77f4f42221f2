#include "bsvie/parallel.hpp"

namespace bsvie {

namespace {
std::atomic<int> g_max_threads{0};
}

int max_threads() {
    int v = g_max_threads.load();
    if (v > 0) {
        return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

} // namespace bsvie
