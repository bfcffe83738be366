#include "morphofit/morphofit.hpp"
#include <cstdio>
#include <map>
using namespace morphofit;
int main() {
    const auto tpl = generate_synthetic_template(1, 10, 18);
    std::map<std::string, std::pair<int,double>> bad;  // station -> (count, worst)
    for (int s = 0; s < 60; ++s) {
        const auto subject = sample_body(tpl, 1000 + s, 0.6);
        for (const auto& st : tpl.stations) {
            const double tape = subject.truths.at(st.name);
            const double path = path_length(subject.true_mesh, tpl.spec(st.name).paths[2]);
            const double margin = (path - tape) / tape;
            auto& [cnt, worst] = bad[st.name];
            worst = std::min(worst == 0 ? 1.0 : worst, margin);
            if (tape > path) { ++cnt; if (cnt <= 2) std::printf("  seed %d %s tape=%.4f path=%.4f\n", s, st.name.c_str(), tape, path); }
        }
    }
    for (auto& [name, cw] : bad)
        std::printf("%-18s violations=%d worst=%+.3f%%\n", name.c_str(), cw.first, 100*cw.second);
    return 0;
}
