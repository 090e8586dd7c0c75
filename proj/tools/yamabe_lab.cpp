#include <cstdio>

// placeholder while the library comes up; replaced by the real CLI
int main() {
    std::puts("yamabe-lab: not wired yet");
    return 3;
}
