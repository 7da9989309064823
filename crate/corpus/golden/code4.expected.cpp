void f(int& v){
    v *= 2;
}
int main(){
    #pragma omp parallel
    #pragma omp master
    #pragma omp taskgroup
    {
        int var = 3;
        #pragma omp task depend(inout: var) default(shared)
        {
            f(var);
        }
        #pragma omp taskwait
        var += 1;
    }
    return 0;
}
