/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    energyCurve(r_max: number): Float64Array;
    meanU(): Float64Array;
    constructor(theta: number, noise: number, seed: number);
    placePoints(r: number, p: number): Uint32Array;
    trace(kind: string): Trace;
    readonly nx: number;
    readonly ny: number;
}

/**
 * True and estimated first coefficient over the test window.
 */
export class Trace {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    estimate(): Float64Array;
    truth(): Float64Array;
    readonly epsilon: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_trace_free: (a: number, b: number) => void;
    readonly demo_energyCurve: (a: number, b: number) => [number, number, number, number];
    readonly demo_meanU: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_nx: (a: number) => number;
    readonly demo_ny: (a: number) => number;
    readonly demo_placePoints: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_trace: (a: number, b: number, c: number) => [number, number, number];
    readonly trace_epsilon: (a: number) => number;
    readonly trace_estimate: (a: number) => [number, number];
    readonly trace_truth: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
