#include <cstdio>

int main() {
    std::puts("bisac: placeholder");
    return 0;
}
