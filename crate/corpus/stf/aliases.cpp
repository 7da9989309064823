#include <cstdio>

void add(int* p, int v) {
    *p = *p + v;
}

void addInto(int& total, const int* p) {
    total = total + *p;
}

int main() {
    int x = 1;
    int total = 0;
    if (x > 0) {
        int* px = &x;
        add(px, 5);
        addInto(total, px);
    }
    printf("%d %d\n", total, x);
    return 0;
}
