/**
 * Embedded documentation viewer fed by /openapi.json.
 *
 * Rendering is delegated to the standard swagger-ui component rather
 * than a custom renderer; the mounter is injectable so tests can
 * substitute a stub and skip the heavyweight bundle.
 */

export type DocMounter = (el: HTMLElement, doc: Record<string, unknown>) => Promise<void> | void;

async function mountSwaggerUi(el: HTMLElement, doc: Record<string, unknown>): Promise<void> {
  const mod = (await import("swagger-ui-dist/swagger-ui-bundle.js")) as {
    default?: unknown;
  };
  await import("swagger-ui-dist/swagger-ui.css");
  const bundle = (mod.default ?? mod) as {
    (options: Record<string, unknown>): unknown;
    presets: { apis: unknown };
  };
  bundle({ spec: doc, domNode: el, presets: [bundle.presets.apis] });
}

export class OpenApiView {
  private header: HTMLElement;
  private viewer: HTMLElement;
  private error: HTMLElement;

  constructor(
    container: HTMLElement,
    private loadDoc: () => Promise<Record<string, unknown>>,
    private mounter: DocMounter = mountSwaggerUi,
  ) {
    container.innerHTML = `
      <button id="btn-openapi" type="button">Load documentation</button>
      <p id="openapi-header" class="openapi-header"></p>
      <p id="openapi-error" class="error hidden"></p>
      <div id="openapi-viewer"></div>
    `;
    this.header = container.querySelector("#openapi-header") as HTMLElement;
    this.viewer = container.querySelector("#openapi-viewer") as HTMLElement;
    this.error = container.querySelector("#openapi-error") as HTMLElement;
    (container.querySelector("#btn-openapi") as HTMLElement).addEventListener("click", () =>
      void this.load(),
    );
  }

  private async load(): Promise<void> {
    this.error.classList.add("hidden");
    try {
      const doc = await this.loadDoc();
      const info = (doc.info ?? {}) as { title?: string; version?: string };
      const paths = Object.keys((doc.paths ?? {}) as Record<string, unknown>);
      this.header.textContent = `${info.title ?? "API"} v${info.version ?? "?"} · ${paths.length} paths`;
      await this.mounter(this.viewer, doc);
    } catch (err) {
      this.error.textContent = err instanceof Error ? err.message : String(err);
      this.error.classList.remove("hidden");
    }
  }
}
