// Certify that two boxes are linked by some iterate of the Kan diffeomorphism and
// print the certificate as JSON.
#include <iostream>

#include <kantran/io.hpp>
#include <kantran/kantran.hpp>

int main() {
    using namespace kantran;
    const KanSystem sys = kan_diffeo_system();
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    const Box V = Box::make(0.7, 0.2, 0.1, 0.1, 0.6, 0.7);
    try {
        const auto cert = build_certificate(sys, U, V);
        std::cout << to_json_string(to_json(cert));
        std::cerr << "re-verified, residual " << verify_certificate(sys, cert) << "\n";
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
