// Render the two basins of the Kan endomorphism on the cylinder as a PGM.
#include <fstream>
#include <iostream>
#include <thread>

#include <kantran/basins.hpp>
#include <kantran/io.hpp>

int main(int argc, char** argv) {
    using namespace kantran;
    const char* path = argc > 1 ? argv[1] : "basins.pgm";
    const auto r = basin_raster(KanEndomorphism{}, 256, 256, {}, 4000, {}, std::thread::hardware_concurrency());
    std::ofstream out(path, std::ios::binary);
    write_pgm(out, r, 0);
    std::cout << path << ": basin0 " << r.fraction(BasinLabel::basin0) << ", basin1 " << r.fraction(BasinLabel::basin1)
              << ", undecided " << r.fraction(BasinLabel::undecided) << "\n";
    const auto rep = intermingling_report(r, 3);
    std::cout << "min fraction at depth 3: " << rep.min_fraction << "\n";
}
