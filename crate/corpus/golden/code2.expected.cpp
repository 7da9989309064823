int f(int v){
    return v + 1;
}
void caller(){
    #pragma omp taskgroup
    {
        int x;
        int y;
        #pragma omp task depend(in:x) depend(inout:y) default(shared)
        {
            y = f(x);
        }
    }
}
