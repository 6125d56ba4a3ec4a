from fastapi import FastAPI
from fastapi.responses import JSONResponse
from app.presentation.http.controllers.artifact_router import router as artifact_router
from app.presentation.http.controllers.bound_router import router as bound_router
from app.presentation.http.controllers.certificate_router import (
    router as certificate_router,
)
from app.presentation.http.controllers.composition_router import (
    router as composition_router,
)

app = FastAPI(title="switchabs")


@app.get("/health")
def health_check():
    """Health check endpoint"""
    return {"status": "healthy"}


@app.exception_handler(404)
async def not_found_handler(request, exc):
    """Handle 404 errors"""
    detail = getattr(exc, "detail", None) or "Not Found!"
    return JSONResponse(status_code=404, content={"detail": detail})


app.include_router(bound_router)
app.include_router(certificate_router)
app.include_router(composition_router)
app.include_router(artifact_router)
