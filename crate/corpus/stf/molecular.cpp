#include <cstdio>

class Cell {
public:
    double pos[3];
    double vel[3];
    int n;
};

class Forces {
public:
    double f[3];
};

void computeForces(const Cell& target, const Cell& other, Forces& out) {
    for (int i = 0; i < target.n; i++) {
        double acc = 0.0;
        for (int j = 0; j < other.n; j++) {
            double d = other.pos[j] - target.pos[i];
            acc = acc + d / (1.0 + d * d);
        }
        for (int k = 0; k < target.n; k++) {
            if (k != i) {
                double d = target.pos[k] - target.pos[i];
                acc = acc + 0.5 * d / (1.0 + d * d);
            }
        }
        out.f[i] = acc;
    }
}

void applyForces(Cell& c, const Forces& fr, double dt) {
    for (int i = 0; i < c.n; i++) {
        c.vel[i] = c.vel[i] + dt * fr.f[i];
        c.pos[i] = c.pos[i] + dt * c.vel[i];
    }
}

double kinetic(const Cell& c) {
    double e = 0.0;
    for (int i = 0; i < c.n; i++) {
        e = e + 0.5 * c.vel[i] * c.vel[i];
    }
    return e;
}

int main() {
    Cell a;
    Cell b;
    Forces fa;
    Forces fb;
    a.n = 3;
    b.n = 3;
    for (int i = 0; i < 3; i++) {
        a.pos[i] = i * 1.0;
        b.pos[i] = 4.0 + i * 0.5;
        a.vel[i] = 0.0;
        b.vel[i] = 0.1 * i;
    }
    double dt = 0.05;
    for (int step = 0; step < 3; step++) {
        computeForces(a, b, fa);
        computeForces(b, a, fb);
        applyForces(a, fa, dt);
        applyForces(b, fb, dt);
    }
    double ea = kinetic(a);
    double eb = kinetic(b);
    printf("%.6f %.6f %.6f %.6f\n", a.pos[0], b.pos[2], ea, eb);
    return 0;
}
