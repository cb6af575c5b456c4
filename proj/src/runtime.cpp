#include "wain/runtime.hpp"

#include <cstdlib>
#include <cstring>

#include <torch/torch.h>

namespace wain {

bool deterministic_mode() {
    const char* v = std::getenv("WAIN_DETERMINISTIC");
    return v != nullptr && std::strcmp(v, "1") == 0;
}

void configure_runtime() {
    if (deterministic_mode()) {
        torch::set_num_threads(1);
        try {
            torch::set_num_interop_threads(1);
        } catch (const c10::Error&) {
            // already fixed by an earlier call or by prior parallel work
        }
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
}

}  // namespace wain
