// Times the parallel negative-scoring kernel against the serial reference on
// a synthetic registry and checks they agree.

#include <chrono>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "toolweave/negatives.hpp"

using namespace toolweave;

namespace {

Registry synthetic_registry(size_t n) {
    std::vector<ApiSpec> specs;
    specs.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        ApiSpec s;
        s.id = "api_" + std::to_string(i);
        s.name = "service_" + std::to_string(i % 97) + "_" + std::to_string(i);
        s.description = "synthetic endpoint " + std::to_string(i) + " returning record batch " +
                        hex8(splitmix64(i));
        specs.push_back(std::move(s));
    }
    return Registry(std::move(specs), "synthetic");
}

template <typename F>
double time_ms(F&& f, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    size_t registry_size = argc > 1 ? std::stoul(argv[1]) : 16000;
    size_t positives_count = argc > 2 ? std::stoul(argv[2]) : 6;
    int reps = argc > 3 ? std::stoi(argv[3]) : 5;

    Registry reg = synthetic_registry(registry_size);
    HashedLocalProvider provider(7, 256);
    auto t0 = std::chrono::steady_clock::now();
    EmbeddingIndex index = build_index(reg, provider);
    auto t1 = std::chrono::steady_clock::now();
    std::cout << "index build (" << registry_size << " apis, dim 256): "
              << std::chrono::duration<double, std::milli>(t1 - t0).count() << " ms\n";

    std::vector<std::string> positives, candidates;
    for (size_t i = 0; i < positives_count; ++i) positives.push_back("api_" + std::to_string(i * 11));
    for (const auto& id : reg.sorted_ids()) candidates.push_back(id);

    std::vector<ScoredCandidate> parallel_out, serial_out;
    double serial_ms = time_ms([&] { serial_out = score_candidates_serial(index, positives, candidates); }, reps);
    double parallel_ms =
        time_ms([&] { parallel_out = score_candidates_parallel(index, positives, candidates); }, reps);

    for (size_t i = 0; i < serial_out.size(); ++i) {
        if (serial_out[i].id != parallel_out[i].id || serial_out[i].score != parallel_out[i].score) {
            std::cerr << "MISMATCH at " << i << "\n";
            return 1;
        }
    }

#ifdef _OPENMP
    std::cout << "openmp threads: " << omp_get_max_threads() << "\n";
#else
    std::cout << "openmp: disabled at build time\n";
#endif
    std::cout << "serial scan:   " << serial_ms << " ms\n";
    std::cout << "parallel scan: " << parallel_ms << " ms\n";
    std::cout << "speedup: " << (parallel_ms > 0 ? serial_ms / parallel_ms : 0.0) << "x\n";
    return 0;
}
