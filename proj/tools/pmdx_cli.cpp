#include <cstdio>

int main() {
    std::puts("pmdx: cli not wired yet");
    return 0;
}
