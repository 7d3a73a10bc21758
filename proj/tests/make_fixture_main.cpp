#include <iostream>

#include "fixturegen.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixture <output-dir>\n";
        return 1;
    }
    try {
        const std::filesystem::path cfg = fixturegen::write_fixture(argv[1]);
        std::cout << cfg.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
